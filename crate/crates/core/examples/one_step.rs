//! Prints the single prompt that the one-step variant sends, next to the
//! agent it was built for.
//!
//! ```text
//! cargo run -p ccotom --example one_step
//! ```

use std::path::Path;

use ccotom::chain::{AblationConfig, ChainRunner};
use ccotom::backend::ScriptedBackend;
use ccotom::constraints::ConstraintRegistry;
use ccotom::datasets::{self, DatasetManifest};
use ccotom::prompting::TemplateSet;
use ccotom::tom::DatasetFamily;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let examples = datasets::load(&DatasetManifest::new(DatasetFamily::BigToM, fixtures.join("case_study.jsonl")))?;
    let templates = TemplateSet::builtin();
    let registry = ConstraintRegistry::builtin();
    // Building the prompt needs no backend calls.
    let backend = ScriptedBackend::new(Vec::new());
    let runner = ChainRunner::new(&templates, &registry, &backend, "unused");

    println!("{}", runner.one_step_prompt(&examples[0], "Luka", &AblationConfig::complete())?);
    println!("\n---- without constraints ----\n");
    println!("{}", runner.one_step_prompt(&examples[0], "Luka", &AblationConfig::without_constraints())?);
    Ok(())
}
