//! Drops each related dimension of the forward-action chain in turn and
//! compares TB∧FB against the complete method. Also shows the plan that each
//! configuration produces.
//!
//! ```text
//! cargo run -p ccotom --example ablation
//! ```

use std::path::Path;

use ccotom::backend::ScriptedBackend;
use ccotom::chain::{plan, AblationConfig, ChainRunner, Method};
use ccotom::constraints::ConstraintRegistry;
use ccotom::datasets::{self, DatasetManifest};
use ccotom::eval::{self, TB_AND_FB};
use ccotom::prompting::TemplateSet;
use ccotom::tom::{related_dimensions, DatasetFamily, TaskType, ToMDimension};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let mut manifest = DatasetManifest::new(DatasetFamily::BigToM, fixtures.join("bigtom_synthetic.jsonl"));
    manifest.task_filter = Some(TaskType::ForwardAction);
    let examples = datasets::load(&manifest)?;
    let backend = ScriptedBackend::from_file(&fixtures.join("bigtom_synthetic_script.jsonl"))?;
    let templates = TemplateSet::builtin();
    let registry = ConstraintRegistry::builtin();
    let runner = ChainRunner::new(&templates, &registry, &backend, "scripted");

    let task = TaskType::ForwardAction;
    let mut configs = vec![AblationConfig::complete()];
    configs.extend(related_dimensions(task).into_iter().map(AblationConfig::without));
    configs.push(AblationConfig::without_constraints());

    let mut baseline = None;
    for config in &configs {
        let steps: Vec<String> = plan(task, DatasetFamily::BigToM, config)?
            .iter()
            .map(|s| format!("{:?}", s.kind))
            .collect();
        let traces = runner.execute_batch(&examples, Method::Ccotom, config, 2);
        let report = eval::aggregate(&eval::score_traces(&traces, &examples, None, eval::DEFAULT_TAU)?);
        let acc = report.bigtom_accuracy(Method::Ccotom, task, TB_AND_FB).unwrap_or(0.0) * 100.0;
        let delta = baseline.map(|b: f64| format!("{:+.1}", acc - b)).unwrap_or_default();
        baseline.get_or_insert(acc);
        println!("{:<18} {TB_AND_FB} {acc:>5.1} {delta:>6}  [{}]", config.label(), steps.join(" -> "));
    }

    // Only related dimensions can be removed.
    let bad = AblationConfig::without(ToMDimension::Action);
    println!("\n{}", plan(TaskType::ForwardBelief, DatasetFamily::BigToM, &bad).unwrap_err());
    Ok(())
}
