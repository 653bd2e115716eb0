use std::path::{Path, PathBuf};

use ccotom::backend::{Backend, Matcher, ScriptedBackend};
use ccotom::chain::{plan, AblationConfig, ChainRunner, Method, StepKind};
use ccotom::constraints::ConstraintRegistry;
use ccotom::datasets::{self, DatasetManifest};
use ccotom::prompting::TemplateSet;
use ccotom::tom::{DatasetFamily, TaskType, ToMExample};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn load(family: DatasetFamily, name: &str) -> Vec<ToMExample> {
    datasets::load(&DatasetManifest::new(family, fixture(name))).unwrap()
}

#[test]
fn fantom_chain_uses_one_call_per_step_plus_one() {
    let examples = load(DatasetFamily::Fantom, "fantom_sample.jsonl");
    let backend = ScriptedBackend::from_file(&fixture("fantom_sample_script.jsonl")).unwrap();
    let templates = TemplateSet::builtin();
    let registry = ConstraintRegistry::builtin();
    let runner = ChainRunner::new(&templates, &registry, &backend, "m");
    let t = runner.execute(&examples[0], Method::Ccotom, &AblationConfig::complete());
    assert!(t.is_ok(), "{:?}", t.error);
    let steps = plan(TaskType::ForwardBelief, DatasetFamily::Fantom, &AblationConfig::complete()).unwrap();
    assert_eq!(backend.provider_calls(), steps.len() as u64 + 1);
    assert_eq!(t.fact_question.as_deref(), Some("Where did Mira travel last month?"));
    // The percept prompt sees the reconstructed fact question.
    assert!(t.steps[2].prompt.contains("Fact question: Where did Mira travel last month?"));
    assert_eq!(t.steps[1].preliminary.len(), 1);
}

#[test]
fn failure_mid_chain_keeps_completed_steps() {
    let examples = load(DatasetFamily::BigToM, "bigtom_synthetic.jsonl");
    let fa = examples.iter().find(|e| e.task == TaskType::ForwardAction).unwrap();
    // Nothing answers the desire step.
    let backend = ScriptedBackend::new(vec![
        (Matcher::Substring("Whose action is queried".into()), "Bruno".into()),
        (Matcher::Substring("What is the percept of".into()), "sees it".into()),
        (Matcher::Substring("believe about the state".into()), "knows".into()),
    ]);
    let templates = TemplateSet::builtin();
    let registry = ConstraintRegistry::builtin();
    let t = ChainRunner::new(&templates, &registry, &backend, "m").execute(fa, Method::Ccotom, &AblationConfig::complete());
    let err = t.error.as_ref().unwrap();
    assert_eq!(err.step_index, 3);
    assert_eq!(err.kind, StepKind::InferDimension(ccotom::tom::ToMDimension::Desire));
    assert!(!err.connectivity);
    assert_eq!(t.steps.len(), 3);
    assert!(t.final_answer.is_none());
}

#[test]
fn cot_is_a_single_call() {
    let examples = load(DatasetFamily::BigToM, "bigtom_synthetic.jsonl");
    let backend = ScriptedBackend::from_file(&fixture("bigtom_synthetic_script.jsonl")).unwrap();
    let templates = TemplateSet::builtin();
    let registry = ConstraintRegistry::builtin();
    let t = ChainRunner::new(&templates, &registry, &backend, "m").execute(&examples[0], Method::Cot, &AblationConfig::complete());
    assert!(t.is_ok());
    assert_eq!(backend.provider_calls(), 1);
    assert!(t.agent.is_none());
    assert!(t.steps[0].prompt.contains("step by step"));
}

#[test]
fn batch_preserves_order_and_matches_sequential() {
    let examples = load(DatasetFamily::BigToM, "bigtom_synthetic.jsonl");
    let backend = ScriptedBackend::from_file(&fixture("bigtom_synthetic_script.jsonl")).unwrap();
    let templates = TemplateSet::builtin();
    let registry = ConstraintRegistry::builtin();
    let runner = ChainRunner::new(&templates, &registry, &backend, "m");
    let ab = AblationConfig::complete();
    let parallel = runner.execute_batch(&examples, Method::Ccotom, &ab, 4);
    let sequential: Vec<_> = examples.iter().map(|e| runner.execute(e, Method::Ccotom, &ab)).collect();
    assert_eq!(parallel, sequential);
}

#[test]
fn template_override_changes_prompt() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("cot.txt"),
        "Story:\n{context}\n\nQ: {question}\nThink it through.\n{answer_format}\n",
    )
    .unwrap();
    let templates = TemplateSet::load_dir(dir.path()).unwrap();
    let registry = ConstraintRegistry::builtin();
    let backend = ScriptedBackend::new(vec![(Matcher::Substring("Think it through.".into()), "Answer: (a)".into())]);
    let examples = load(DatasetFamily::BigToM, "bigtom_synthetic.jsonl");
    let t = ChainRunner::new(&templates, &registry, &backend, "m").execute(&examples[0], Method::Cot, &AblationConfig::complete());
    assert!(t.is_ok(), "{:?}", t.error);
    assert!(t.steps[0].prompt.starts_with("Story:\n"));
}
