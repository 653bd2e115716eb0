//! Command-line entry points.
//!
//! Every subcommand is also a plain function ([`cmd_run`], [`cmd_ablate`],
//! [`cmd_score`]) so the same pipeline can be driven from code.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Serialize;
use thiserror::Error;

use crate::backend::{Backend, BackendConfig, BackendError, ResponseCache};
use crate::chain::{AblationConfig, ChainError, ChainRunner, ChainTrace, Method};
use crate::constraints::{ConstraintError, ConstraintRegistry};
use crate::datasets::{self, DatasetError, DatasetManifest};
use crate::eval::{self, Embedder, EmbedderConfig, EvalError, EvalReport, Verdict, DEFAULT_TAU, TB_AND_FB};
use crate::prompting::{PromptError, TemplateSet};
use crate::tom::{
    related_dimensions, ConversationScope, DatasetFamily, QuestionFormat, TaskType, ToMDimension, ToMExample,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

#[derive(Parser, Debug)]
#[command(name = "ccotom", version, about = "Constrained chain-of-ToM prompting and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run one method over a dataset and write traces, verdicts and a report.
    Run(RunArgs),
    /// Run the complete method and a list of ablations, with a delta summary.
    Ablate(AblateArgs),
    /// Re-score saved traces without prompting again.
    Score(ScoreArgs),
    /// Prompt template utilities.
    Templates {
        #[command(subcommand)]
        command: TemplatesCommand,
    },
    /// Dataset utilities.
    Dataset {
        #[command(subcommand)]
        command: DatasetCommand,
    },
    /// Constraint registry utilities.
    Constraints {
        #[command(subcommand)]
        command: ConstraintsCommand,
    },
    /// Response cache utilities.
    Cache {
        #[command(subcommand)]
        command: CacheCommand,
    },
}

#[derive(Subcommand, Debug)]
pub enum TemplatesCommand {
    /// Check every template's placeholders against what its step binds.
    Check {
        #[arg(long)]
        templates: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
pub enum DatasetCommand {
    /// Print per-line diagnostics and pair statistics.
    Validate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_parser = parse_family)]
        family: DatasetFamily,
    },
}

#[derive(Subcommand, Debug)]
pub enum ConstraintsCommand {
    /// Write the constraint table as TSV (stdout unless --out is given).
    Export {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
pub enum CacheCommand {
    /// Re-hash every cache entry and report corrupt ones.
    Verify {
        #[arg(long)]
        dir: PathBuf,
    },
}

fn parse_family(s: &str) -> Result<DatasetFamily, String> {
    DatasetFamily::parse(s).ok_or_else(|| format!("unknown family {s:?} (bigtom, fantom)"))
}

fn parse_method(s: &str) -> Result<Method, String> {
    Method::parse(s).ok_or_else(|| format!("unknown method {s:?} (ccotom, onestep, cot)"))
}

fn parse_task(s: &str) -> Result<TaskType, String> {
    TaskType::parse(s).ok_or_else(|| format!("unknown task {s:?}"))
}

fn parse_dimension(s: &str) -> Result<ToMDimension, String> {
    ToMDimension::parse(s).ok_or_else(|| format!("unknown dimension {s:?}"))
}

fn parse_scope(s: &str) -> Result<ConversationScope, String> {
    match s.to_ascii_lowercase().as_str() {
        "short" => Ok(ConversationScope::Short),
        "full" => Ok(ConversationScope::Full),
        _ => Err(format!("unknown scope {s:?} (short, full)")),
    }
}

fn parse_qtype(s: &str) -> Result<QuestionFormat, String> {
    match s.to_ascii_lowercase().as_str() {
        "choice" => Ok(QuestionFormat::MultipleChoice),
        "dist" => Ok(QuestionFormat::FreeForm),
        _ => Err(format!("unknown qtype {s:?} (choice, dist)")),
    }
}

/// Dataset selection shared by every subcommand that reads examples.
#[derive(Args, Debug, Clone)]
pub struct DatasetArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_parser = parse_family)]
    pub family: DatasetFamily,
    /// BigToM only.
    #[arg(long, value_parser = parse_task)]
    pub task: Option<TaskType>,
    /// FANToM only: short or full.
    #[arg(long, value_parser = parse_scope)]
    pub scope: Option<ConversationScope>,
    /// FANToM only: choice or dist.
    #[arg(long, value_parser = parse_qtype)]
    pub qtype: Option<QuestionFormat>,
}

impl DatasetArgs {
    pub fn manifest(&self) -> DatasetManifest {
        DatasetManifest {
            family: self.family,
            path: self.dataset.clone(),
            task_filter: self.task,
            scope_filter: self.scope,
            qtype_filter: self.qtype,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct PipelineArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    #[arg(long, default_value = "ccotom", value_parser = parse_method)]
    pub method: Method,
    /// Backend TOML file.
    #[arg(long)]
    pub backend: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub workers: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    pub tau: f64,
    /// Embedder TOML file, needed for Dist questions.
    #[arg(long)]
    pub embedder: Option<PathBuf>,
    /// Directory of `<template id>.txt` overrides.
    #[arg(long)]
    pub templates: Option<PathBuf>,
    /// TSV constraint table replacing built-in rows with the same id.
    #[arg(long)]
    pub constraints_table: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[arg(long = "drop-dimension", value_parser = parse_dimension)]
    pub drop_dimension: Vec<ToMDimension>,
    #[arg(long)]
    pub no_constraints: bool,
}

#[derive(Args, Debug, Clone)]
pub struct AblateArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// A dimension to drop, or `constraints`. Repeat for several
    /// configurations. Defaults to every related dimension of the task.
    #[arg(long = "drop")]
    pub drop: Vec<String>,
}

#[derive(Args, Debug, Clone)]
pub struct ScoreArgs {
    /// A traces.jsonl written by `run`.
    #[arg(long)]
    pub traces: PathBuf,
    #[command(flatten)]
    pub data: DatasetArgs,
    #[arg(long)]
    pub embedder: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    pub tau: f64,
    /// Write verdicts and the report here instead of only printing.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Everything a run needs besides the examples.
pub struct Session {
    pub templates: TemplateSet,
    pub constraints: ConstraintRegistry,
    pub backend: Arc<dyn Backend>,
    pub model: String,
    pub embedder: Option<Box<dyn Embedder>>,
}

impl Session {
    pub fn from_args(args: &PipelineArgs) -> Result<Self, CliError> {
        let templates = match &args.templates {
            Some(dir) => TemplateSet::load_dir(dir)?,
            None => TemplateSet::builtin(),
        };
        let constraints = match &args.constraints_table {
            Some(path) => ConstraintRegistry::import_table(fs::File::open(path).map_err(io_err(path))?)?,
            None => ConstraintRegistry::builtin(),
        };
        let backend_cfg = BackendConfig::load(&args.backend)?;
        Ok(Self {
            templates,
            constraints,
            backend: backend_cfg.build()?,
            model: backend_cfg.model,
            embedder: load_embedder(args.embedder.as_deref())?,
        })
    }

    pub fn run(
        &self,
        examples: &[ToMExample],
        method: Method,
        ablation: &AblationConfig,
        workers: usize,
        tau: f64,
    ) -> Result<RunResult, CliError> {
        let runner = ChainRunner::new(&self.templates, &self.constraints, self.backend.as_ref(), &self.model);
        let calls_before = self.backend.provider_calls();
        let traces = runner.execute_batch(examples, method, ablation, workers);
        let provider_calls = self.backend.provider_calls() - calls_before;
        let verdicts = eval::score_traces(&traces, examples, self.embedder.as_deref(), tau)?;
        let report = eval::aggregate(&verdicts);
        Ok(RunResult { traces, verdicts, report, provider_calls })
    }
}

fn load_embedder(path: Option<&Path>) -> Result<Option<Box<dyn Embedder>>, CliError> {
    match path {
        Some(p) => Ok(Some(EmbedderConfig::load(p)?.build()?)),
        None => Ok(None),
    }
}

pub struct RunResult {
    pub traces: Vec<ChainTrace>,
    pub verdicts: Vec<Verdict>,
    pub report: EvalReport,
    /// Requests that reached the provider rather than the cache.
    pub provider_calls: u64,
}

impl RunResult {
    /// 0 when every example finished, 2 when some errored, 1 when none
    /// finished because the backend could not be reached.
    pub fn exit_code(&self) -> i32 {
        let errors: Vec<_> = self.traces.iter().filter_map(|t| t.error.as_ref()).collect();
        if errors.is_empty() {
            0
        } else if errors.len() == self.traces.len() && errors.iter().all(|e| e.connectivity) {
            1
        } else {
            2
        }
    }
}

fn jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("records serialize"));
        out.push('\n');
    }
    out
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(io_err(path))
}

fn write_scored(dir: &Path, verdicts: &[Verdict], report: &EvalReport) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_file(&dir.join("verdicts.jsonl"), &jsonl(verdicts))?;
    let mut json = serde_json::to_string_pretty(report).expect("report serializes");
    json.push('\n');
    write_file(&dir.join("report.json"), &json)?;
    write_file(&dir.join("report.txt"), &report.render_text())
}

/// Writes `traces.jsonl`, `verdicts.jsonl`, `report.json` and `report.txt`.
pub fn write_outputs(dir: &Path, result: &RunResult) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_file(&dir.join("traces.jsonl"), &jsonl(&result.traces))?;
    write_scored(dir, &result.verdicts, &result.report)
}

pub fn run_ablation(args: &RunArgs) -> AblationConfig {
    AblationConfig {
        dropped_dimensions: args.drop_dimension.iter().copied().collect(),
        drop_constraints: args.no_constraints,
    }
}

fn check_workers(p: &PipelineArgs) -> Result<(), CliError> {
    if p.workers == 0 {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    Ok(())
}

fn tasks_of(examples: &[ToMExample]) -> Vec<TaskType> {
    let mut tasks: Vec<TaskType> = examples.iter().map(|e| e.task).collect();
    tasks.sort();
    tasks.dedup();
    tasks
}

fn check_ablation(ablation: &AblationConfig, examples: &[ToMExample]) -> Result<(), CliError> {
    for task in tasks_of(examples) {
        ablation.validate(task)?;
    }
    Ok(())
}

/// `run`: returns the outcome and leaves exit-code policy to the caller.
pub fn cmd_run(args: &RunArgs) -> Result<RunResult, CliError> {
    let p = &args.pipeline;
    check_workers(p)?;
    let examples = datasets::load(&p.data.manifest())?;
    let ablation = run_ablation(args);
    check_ablation(&ablation, &examples)?;
    let session = Session::from_args(p)?;
    let result = session.run(&examples, p.method, &ablation, p.workers, p.tau)?;
    write_outputs(&p.out, &result)?;
    info!("{} provider calls", result.provider_calls);
    Ok(result)
}

/// One line of the ablation summary.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationRow {
    pub task: Option<TaskType>,
    pub configuration: String,
    pub metric: String,
    pub score: Option<f64>,
    pub delta: Option<f64>,
}

pub struct AblationOutcome {
    pub runs: Vec<(AblationConfig, RunResult)>,
    pub rows: Vec<AblationRow>,
}

impl AblationOutcome {
    pub fn exit_code(&self) -> i32 {
        self.runs.iter().map(|(_, r)| r.exit_code()).max().unwrap_or(0)
    }

    pub fn render_summary(&self) -> String {
        let mut out = format!("{:<18}| {:<18}| {:>7} | {:>6}\n", "Task", "Configuration", TB_AND_FB, "Δ");
        for row in &self.rows {
            let task = row.task.map(|t| t.long_name()).unwrap_or("-");
            let score = row.score.map(|s| format!("{:.1}", s * 100.0)).unwrap_or_else(|| "-".into());
            let delta = match row.delta {
                Some(d) if row.configuration != "complete method" => format!("{:+.1}", d * 100.0),
                _ => String::new(),
            };
            out.push_str(&format!("{task:<18}| {:<18}| {score:>7} | {delta:>6}\n", row.configuration));
        }
        out
    }
}

/// Turns `--drop` values into configurations, complete method first.
pub fn ablation_configs(drops: &[String], examples: &[ToMExample]) -> Result<Vec<AblationConfig>, CliError> {
    let mut configs = vec![AblationConfig::complete()];
    if drops.is_empty() {
        match tasks_of(examples).as_slice() {
            [task] => configs.extend(related_dimensions(*task).into_iter().map(AblationConfig::without)),
            _ => {
                return Err(CliError::Usage(
                    "the dataset mixes tasks; pick one with --task or list configurations with --drop".into(),
                ))
            }
        }
    }
    for d in drops {
        let config = if d.eq_ignore_ascii_case("constraints") {
            AblationConfig::without_constraints()
        } else {
            AblationConfig::without(parse_dimension(d).map_err(CliError::Usage)?)
        };
        check_ablation(&config, examples)?;
        if !configs.contains(&config) {
            configs.push(config);
        }
    }
    Ok(configs)
}

fn slug(config: &AblationConfig) -> String {
    config.label().replace("w/o ", "without-").replace([' ', ','], "-").replace("--", "-")
}

pub fn cmd_ablate(args: &AblateArgs) -> Result<AblationOutcome, CliError> {
    let p = &args.pipeline;
    check_workers(p)?;
    let examples = datasets::load(&p.data.manifest())?;
    let configs = ablation_configs(&args.drop, &examples)?;
    let session = Session::from_args(p)?;
    let mut runs = Vec::new();
    for config in configs {
        let result = session.run(&examples, p.method, &config, p.workers, p.tau)?;
        write_outputs(&p.out.join(slug(&config)), &result)?;
        runs.push((config, result));
    }
    let rows = summary_rows(&runs, &tasks_of(&examples), p.data.family, p.method);
    let outcome = AblationOutcome { runs, rows };
    write_file(&p.out.join("summary.txt"), &outcome.render_summary())?;
    let mut json = serde_json::to_string_pretty(&outcome.rows).expect("rows serialize");
    json.push('\n');
    write_file(&p.out.join("summary.json"), &json)?;
    Ok(outcome)
}

fn headline(report: &EvalReport, family: DatasetFamily, method: Method, task: TaskType) -> (String, Option<f64>) {
    match family {
        DatasetFamily::BigToM => (TB_AND_FB.to_string(), report.bigtom_accuracy(method, task, TB_AND_FB)),
        DatasetFamily::Fantom => {
            let (n, c) = report
                .groups
                .iter()
                .filter(|g| g.method == method)
                .fold((0, 0), |(n, c), g| (n + g.n, c + g.correct));
            ("accuracy".to_string(), (n > 0).then(|| c as f64 / n as f64))
        }
    }
}

fn summary_rows(
    runs: &[(AblationConfig, RunResult)],
    tasks: &[TaskType],
    family: DatasetFamily,
    method: Method,
) -> Vec<AblationRow> {
    let mut rows = Vec::new();
    for &task in tasks {
        let base = runs.first().and_then(|(_, r)| headline(&r.report, family, method, task).1);
        for (config, result) in runs {
            if config.validate(task).is_err() {
                continue;
            }
            let (metric, score) = headline(&result.report, family, method, task);
            rows.push(AblationRow {
                task: (family == DatasetFamily::BigToM).then_some(task),
                configuration: config.label(),
                metric,
                score,
                delta: score.zip(base).map(|(s, b)| s - b),
            });
        }
    }
    rows
}

pub fn read_traces(path: &Path) -> Result<Vec<ChainTrace>, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| {
                CliError::Usage(format!("{}:{}: not a trace record: {e}", path.display(), i + 1))
            })
        })
        .collect()
}

pub fn cmd_score(args: &ScoreArgs) -> Result<(Vec<Verdict>, EvalReport), CliError> {
    let traces = read_traces(&args.traces)?;
    // Score against every record; filters only narrow which traces count.
    let mut all = args.data.manifest();
    all.task_filter = None;
    all.scope_filter = None;
    all.qtype_filter = None;
    let examples = datasets::load(&all)?;
    let manifest = args.data.manifest();
    let keep: std::collections::HashSet<&str> =
        examples.iter().filter(|e| manifest.matches(e)).map(|e| e.id.as_str()).collect();
    let embedder = load_embedder(args.embedder.as_deref())?;
    let verdicts: Vec<Verdict> = eval::score_traces(&traces, &examples, embedder.as_deref(), args.tau)?
        .into_iter()
        .filter(|v| keep.contains(v.example_id.as_str()))
        .collect();
    let report = eval::aggregate(&verdicts);
    if let Some(dir) = &args.out {
        write_scored(dir, &verdicts, &report)?;
    }
    Ok((verdicts, report))
}

fn templates_check(dir: Option<&Path>) -> Result<i32, CliError> {
    let set = match dir {
        Some(d) => TemplateSet::load_dir(d)?,
        None => TemplateSet::builtin(),
    };
    let mut code = 0;
    for check in set.check() {
        if check.is_ok() {
            println!("ok       {}", check.id);
        } else {
            code = 1;
            println!(
                "mismatch {}  missing: [{}]  unexpected: [{}]",
                check.id,
                check.missing.join(", "),
                check.unexpected.join(", ")
            );
        }
    }
    Ok(code)
}

fn dataset_validate(path: &Path, family: DatasetFamily) -> Result<i32, CliError> {
    let text = datasets::load_text(path)?;
    let errors = datasets::diagnose(family, &text);
    for e in &errors {
        println!("error: {e}");
    }
    if !errors.is_empty() {
        return Ok(1);
    }
    let examples = datasets::parse_records(family, &text)?;
    let stats = datasets::stats(&examples);
    println!("examples: {}  pairs: {}  unpaired: {}", stats.examples, stats.pairs, stats.unpaired);
    for (group, n) in &stats.by_group {
        println!("  {group:<28} {n}");
    }
    Ok(0)
}

fn constraints_export(out: Option<&Path>) -> Result<i32, CliError> {
    let registry = ConstraintRegistry::builtin();
    match out {
        Some(path) => registry.export_table(fs::File::create(path).map_err(io_err(path))?)?,
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            registry.export_table(&mut lock)?;
            lock.flush().map_err(io_err(Path::new("<stdout>")))?;
        }
    }
    Ok(0)
}

fn cache_verify(dir: &Path) -> Result<i32, CliError> {
    let (ok, bad) = ResponseCache::open(dir)?.verify_all()?;
    println!("valid entries: {ok}");
    for digest in &bad {
        println!("corrupt: {digest}");
    }
    Ok(i32::from(!bad.is_empty()))
}

/// Runs a parsed command and returns the process exit code.
pub fn dispatch(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Run(args) => cmd_run(&args).map(|r| {
            print!("{}", r.report.render_text());
            r.exit_code()
        }),
        Command::Ablate(args) => cmd_ablate(&args).map(|o| {
            print!("{}", o.render_summary());
            o.exit_code()
        }),
        Command::Score(args) => cmd_score(&args).map(|(_, report)| {
            print!("{}", report.render_text());
            0
        }),
        Command::Templates { command: TemplatesCommand::Check { templates } } => templates_check(templates.as_deref()),
        Command::Dataset { command: DatasetCommand::Validate { dataset, family } } => dataset_validate(&dataset, family),
        Command::Constraints { command: ConstraintsCommand::Export { out } } => constraints_export(out.as_deref()),
        Command::Cache { command: CacheCommand::Verify { dir } } => cache_verify(&dir),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_run_flags() {
        let cli = Cli::try_parse_from([
            "ccotom", "run", "--dataset", "d.jsonl", "--family", "bigtom", "--method", "onestep", "--backend",
            "b.toml", "--out", "o", "--drop-dimension", "percept", "--drop-dimension", "belief", "--no-constraints",
            "--workers", "2", "--tau", "0.3",
        ])
        .unwrap();
        let Command::Run(args) = cli.command else { panic!() };
        assert_eq!(args.pipeline.method, Method::OneStep);
        assert_eq!(args.pipeline.workers, 2);
        let ab = run_ablation(&args);
        assert!(ab.drop_constraints);
        assert_eq!(ab.dropped_dimensions.len(), 2);
    }

    #[test]
    fn slugs() {
        assert_eq!(slug(&AblationConfig::complete()), "complete-method");
        assert_eq!(slug(&AblationConfig::without(ToMDimension::Percept)), "without-percept");
    }
}
