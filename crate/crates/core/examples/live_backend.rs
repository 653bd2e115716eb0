//! Runs the chain against a real chat-completion endpoint described by a
//! backend TOML file, for example:
//!
//! ```toml
//! url = "http://localhost:8000/v1/chat/completions"
//! model = "my-model"
//! api_key_env = "OPENAI_API_KEY"
//! cache_dir = ".ccotom-cache"
//! ```
//!
//! ```text
//! cargo run -p ccotom --example live_backend -- backend.toml [dataset.jsonl]
//! ```
//!
//! The dataset defaults to the bundled case-study story.

use std::path::{Path, PathBuf};

use ccotom::backend::BackendConfig;
use ccotom::chain::{AblationConfig, ChainRunner, Method};
use ccotom::constraints::ConstraintRegistry;
use ccotom::datasets::{self, DatasetManifest};
use ccotom::eval;
use ccotom::prompting::TemplateSet;
use ccotom::tom::DatasetFamily;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    let mut args = std::env::args().skip(1);
    let Some(config) = args.next() else {
        eprintln!("usage: live_backend <backend.toml> [bigtom dataset.jsonl]");
        std::process::exit(2);
    };
    let data = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/case_study.jsonl"));

    let cfg = BackendConfig::load(Path::new(&config))?;
    let backend = cfg.build()?;
    let examples = datasets::load(&DatasetManifest::new(DatasetFamily::BigToM, data))?;
    let templates = TemplateSet::builtin();
    let registry = ConstraintRegistry::builtin();
    let runner = ChainRunner::new(&templates, &registry, backend.as_ref(), &cfg.model);

    let traces = runner.execute_batch(&examples, Method::Ccotom, &AblationConfig::complete(), 4);
    for t in &traces {
        match &t.error {
            None => println!("{}: agent {:?}, answer {:?}", t.example_id, t.agent, t.final_answer.as_ref().map(|a| &a.raw)),
            Some(e) => println!("{}: failed at step {} ({})", t.example_id, e.step_index, e.message),
        }
    }
    let verdicts = eval::score_traces(&traces, &examples, None, eval::DEFAULT_TAU)?;
    println!("\n{}", eval::aggregate(&verdicts).render_text());
    Ok(())
}
