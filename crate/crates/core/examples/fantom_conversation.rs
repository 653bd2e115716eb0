//! Runs the FANTOM chain on a short conversation: identify the agent,
//! reconstruct the fact question, infer what the agent perceived, then
//! answer. Free-form answers are scored with token F1 and the embedding
//! distance rule.
//!
//! ```text
//! cargo run -p ccotom --example fantom_conversation
//! ```

use std::path::Path;

use ccotom::backend::ScriptedBackend;
use ccotom::chain::{AblationConfig, ChainRunner, Method};
use ccotom::constraints::ConstraintRegistry;
use ccotom::datasets::{self, DatasetManifest};
use ccotom::eval::{self, OrthogonalEmbedder};
use ccotom::prompting::TemplateSet;
use ccotom::tom::{DatasetFamily, ToMDimension};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let examples = datasets::load(&DatasetManifest::new(DatasetFamily::Fantom, fixtures.join("fantom_sample.jsonl")))?;
    let backend = ScriptedBackend::from_file(&fixtures.join("fantom_sample_script.jsonl"))?;
    let templates = TemplateSet::builtin();
    let registry = ConstraintRegistry::builtin();
    let runner = ChainRunner::new(&templates, &registry, &backend, "scripted");

    let traces = runner.execute_batch(&examples, Method::Ccotom, &AblationConfig::complete(), 2);
    let first = &traces[0];
    println!("agent: {}", first.agent.as_deref().unwrap_or("?"));
    println!("fact question: {}", first.fact_question.as_deref().unwrap_or("?"));
    println!("percept: {}\n", first.inferred(ToMDimension::Percept).unwrap_or("?"));

    let embedder = OrthogonalEmbedder::new(256);
    let verdicts = eval::score_traces(&traces, &examples, Some(&embedder), eval::DEFAULT_TAU)?;
    for v in &verdicts {
        let f1 = v.token_f1.map(|f| format!("F1 {f:.2}")).unwrap_or_default();
        println!("{:<28} {:<16} correct={} {f1}", v.example_id, v.qtype.label(), v.correct);
    }
    println!("\n{}", eval::aggregate(&verdicts).render_text());
    Ok(())
}
