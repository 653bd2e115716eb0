//! Walks one forward-action story through the constrained chain and prints
//! every prompt, response and the final choice.
//!
//! ```text
//! cargo run -p ccotom --example case_study
//! ```

use std::path::Path;

use ccotom::backend::ScriptedBackend;
use ccotom::chain::{AblationConfig, ChainRunner, Method, StepValue};
use ccotom::constraints::ConstraintRegistry;
use ccotom::datasets::{self, DatasetManifest};
use ccotom::prompting::TemplateSet;
use ccotom::tom::DatasetFamily;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let examples = datasets::load(&DatasetManifest::new(DatasetFamily::BigToM, fixtures.join("case_study.jsonl")))?;
    let backend = ScriptedBackend::from_file(&fixtures.join("case_study_script.jsonl"))?;

    let templates = TemplateSet::builtin();
    let registry = ConstraintRegistry::builtin();
    let runner = ChainRunner::new(&templates, &registry, &backend, "scripted");
    let trace = runner.execute(&examples[0], Method::Ccotom, &AblationConfig::complete());

    for (i, step) in trace.steps.iter().enumerate() {
        println!("=== step {} {:?}", i + 1, step.kind);
        if !step.constraint_set.is_empty() {
            println!("constraints: {}", step.constraint_set.ids().join(", "));
        }
        println!("--- prompt\n{}", step.prompt);
        let shown = match &step.parsed {
            StepValue::Text(t) => t.clone(),
            StepValue::Answer(a) => format!("{:?} {:?}", a.kind, a.option_index),
        };
        println!("--- response\n{}\n--- parsed: {shown}\n", step.raw_response);
    }

    let answer = trace.final_answer.as_ref().ok_or("chain did not finish")?;
    let options = &examples[0].question.options;
    let picked = answer.option_index.and_then(|i| options.get(i)).map(String::as_str).unwrap_or("?");
    println!("final choice: {picked}");
    Ok(())
}
