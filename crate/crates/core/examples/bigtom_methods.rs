//! Runs CCoToM, its one-step variant and plain chain-of-thought over a small
//! BigToM-style set and prints the TB / FB / TB∧FB table for each.
//!
//! The responses come from a script, so the numbers are fixed:
//!
//! ```text
//! cargo run -p ccotom --example bigtom_methods
//! ```

use std::path::Path;

use ccotom::backend::{Backend, ScriptedBackend};
use ccotom::chain::{AblationConfig, ChainRunner, Method};
use ccotom::constraints::ConstraintRegistry;
use ccotom::datasets::{self, DatasetManifest};
use ccotom::eval::{self, TB_AND_FB};
use ccotom::prompting::TemplateSet;
use ccotom::tom::{DatasetFamily, TaskType};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let examples = datasets::load(&DatasetManifest::new(DatasetFamily::BigToM, fixtures.join("bigtom_synthetic.jsonl")))?;
    let backend = ScriptedBackend::from_file(&fixtures.join("bigtom_synthetic_script.jsonl"))?;
    let templates = TemplateSet::builtin();
    let registry = ConstraintRegistry::builtin();
    let runner = ChainRunner::new(&templates, &registry, &backend, "scripted");

    let mut verdicts = Vec::new();
    for method in [Method::Cot, Method::OneStep, Method::Ccotom] {
        let before = backend.provider_calls();
        let traces = runner.execute_batch(&examples, method, &AblationConfig::complete(), 4);
        println!("{:<15} {:>3} backend calls", method.label(), backend.provider_calls() - before);
        verdicts.extend(eval::score_traces(&traces, &examples, None, eval::DEFAULT_TAU)?);
    }

    let report = eval::aggregate(&verdicts);
    println!("\n{}", report.render_text());

    // Individual cells are available for programmatic use.
    if let Some(acc) = report.bigtom_accuracy(Method::Ccotom, TaskType::ForwardBelief, TB_AND_FB) {
        println!("CCoToM forward belief {TB_AND_FB}: {:.1}%", acc * 100.0);
    }
    Ok(())
}
