//! Wraps a backend in the on-disk response cache. The second pass over the
//! same examples is served entirely from disk, and `verify_all` detects a
//! tampered entry.
//!
//! ```text
//! cargo run -p ccotom --example response_cache
//! ```

use std::path::Path;

use ccotom::backend::{Backend, CachedBackend, ResponseCache, ScriptedBackend};
use ccotom::chain::{AblationConfig, ChainRunner, Method};
use ccotom::constraints::ConstraintRegistry;
use ccotom::datasets::{self, DatasetManifest};
use ccotom::prompting::TemplateSet;
use ccotom::tom::DatasetFamily;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let examples = datasets::load(&DatasetManifest::new(DatasetFamily::BigToM, fixtures.join("bigtom_synthetic.jsonl")))?;
    let dir = tempfile::tempdir()?;
    let templates = TemplateSet::builtin();
    let registry = ConstraintRegistry::builtin();

    let mut first_traces = None;
    for pass in ["cold", "warm"] {
        let inner = ScriptedBackend::from_file(&fixtures.join("bigtom_synthetic_script.jsonl"))?;
        let backend = CachedBackend::new(inner, ResponseCache::open(dir.path())?);
        let runner = ChainRunner::new(&templates, &registry, &backend, "scripted");
        let traces = runner.execute_batch(&examples, Method::Ccotom, &AblationConfig::complete(), 4);
        println!(
            "{pass}: provider calls {}, cache hits {}",
            backend.provider_calls(),
            backend.cache_hits()
        );
        match &first_traces {
            None => first_traces = Some(traces),
            Some(t) => println!("identical traces: {}", *t == traces),
        }
    }

    let cache = ResponseCache::open(dir.path())?;
    let entry = std::fs::read_dir(dir.path())?.next().ok_or("empty cache")??.path();
    let mut stored: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&entry)?)?;
    stored["text"] = "edited by hand".into();
    std::fs::write(&entry, stored.to_string())?;
    let (checked, corrupt) = cache.verify_all()?;
    println!("checked {checked} entries, corrupt: {corrupt:?}");
    Ok(())
}
