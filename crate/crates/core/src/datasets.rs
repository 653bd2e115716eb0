//! Line-delimited JSON dataset records.
//!
//! BigToM records:
//!
//! ```json
//! {"id": "fb-01-tb", "pair_id": "fb-01", "task": "forward_belief", "condition": "TB",
//!  "story": "...", "question": "...", "options": ["...", "..."], "answer_index": 0}
//! ```
//!
//! FANToM records (`qtype` is `choice` or `dist`, `scope` is `short` or `full`):
//!
//! ```json
//! {"id": "f-1", "scope": "short", "qtype": "dist", "turns": [{"speaker": "Kai", "text": "..."}],
//!  "question": "...", "answer": "...", "wrong_answers": ["..."]}
//! ```
//!
//! Choice records carry `options` and `answer_index` instead of `answer`.
//! Either family may add `target_agent`, used when the model's answer to the
//! agent question cannot be parsed.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::tom::{
    Condition, Context, ConversationScope, DatasetFamily, GoldAnswer, Question, QuestionFormat, TaskType, ToMExample,
    Turn,
};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub family: DatasetFamily,
    pub path: PathBuf,
    #[serde(default)]
    pub task_filter: Option<TaskType>,
    #[serde(default)]
    pub scope_filter: Option<ConversationScope>,
    #[serde(default)]
    pub qtype_filter: Option<QuestionFormat>,
}

impl DatasetManifest {
    pub fn new(family: DatasetFamily, path: impl Into<PathBuf>) -> Self {
        Self { family, path: path.into(), task_filter: None, scope_filter: None, qtype_filter: None }
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        match self.family {
            DatasetFamily::BigToM if self.scope_filter.is_some() || self.qtype_filter.is_some() => Err(
                DatasetError::InvalidManifest("scope and qtype filters apply to FANToM only".into()),
            ),
            DatasetFamily::Fantom if self.task_filter.is_some() => {
                Err(DatasetError::InvalidManifest("the task filter applies to BigToM only".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn matches(&self, example: &ToMExample) -> bool {
        self.task_filter.is_none_or(|t| example.task == t)
            && self.scope_filter.is_none_or(|s| example.scope == Some(s))
            && self.qtype_filter.is_none_or(|q| example.question.format == q)
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: field `{field}`: {reason}")]
    SchemaError { line: usize, field: String, reason: String },
    #[error("duplicate example id {0}")]
    DuplicateId(String),
    #[error("pair {pair_id}: {reason}")]
    BrokenPair { pair_id: String, reason: String },
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

struct Record<'a> {
    line: usize,
    obj: &'a Map<String, Value>,
}

impl Record<'_> {
    fn err(&self, field: &str, reason: impl Into<String>) -> DatasetError {
        DatasetError::SchemaError { line: self.line, field: field.into(), reason: reason.into() }
    }

    fn opt_str(&self, field: &str) -> Result<Option<String>, DatasetError> {
        match self.obj.get(field) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(self.err(field, "expected a string")),
        }
    }

    fn str(&self, field: &str) -> Result<String, DatasetError> {
        match self.opt_str(field)? {
            Some(s) if !s.trim().is_empty() => Ok(s),
            Some(_) => Err(self.err(field, "must not be empty")),
            None => Err(self.err(field, "missing")),
        }
    }

    fn opt_strings(&self, field: &str) -> Result<Option<Vec<String>>, DatasetError> {
        match self.obj.get(field) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| v.as_str().map(str::to_string).ok_or_else(|| self.err(field, "expected strings")))
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
            Some(_) => Err(self.err(field, "expected a list of strings")),
        }
    }

    fn opt_index(&self, field: &str) -> Result<Option<usize>, DatasetError> {
        match self.obj.get(field) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => v
                .as_u64()
                .map(|n| Some(n as usize))
                .ok_or_else(|| self.err(field, "expected a non-negative integer")),
        }
    }

    fn hint(&self, q: Question) -> Result<Question, DatasetError> {
        Ok(match self.opt_str("target_agent")? {
            Some(a) => q.with_agent_hint(a),
            None => q,
        })
    }

    fn choice(&self) -> Result<(Question, GoldAnswer), DatasetError> {
        let options = self.opt_strings("options")?.ok_or_else(|| self.err("options", "missing"))?;
        let index = self.opt_index("answer_index")?.ok_or_else(|| self.err("answer_index", "missing"))?;
        if index >= options.len() {
            return Err(self.err("answer_index", format!("{index} is out of range for {} options", options.len())));
        }
        let q = Question::multiple_choice(self.str("question")?, options).map_err(|e| self.err("options", e.to_string()))?;
        Ok((self.hint(q)?, GoldAnswer::Option { index }))
    }

    fn bigtom(&self) -> Result<ToMExample, DatasetError> {
        let id = self.str("id")?;
        let task = self.str("task")?;
        let task = TaskType::parse(&task).ok_or_else(|| self.err("task", format!("unknown task {task:?}")))?;
        let condition = match self.str("condition")?.as_str() {
            "TB" => Condition::TrueBelief,
            "FB" => Condition::FalseBelief,
            other => return Err(self.err("condition", format!("expected TB or FB, got {other:?}"))),
        };
        let pair_id = self.str("pair_id")?;
        let (question, gold) = self.choice()?;
        Ok(ToMExample {
            id,
            family: DatasetFamily::BigToM,
            task,
            context: Context::narrative(self.str("story")?),
            question,
            gold,
            condition: Some(condition),
            pair_id: Some(pair_id),
            scope: None,
        })
    }

    fn fantom(&self) -> Result<ToMExample, DatasetError> {
        let id = self.str("id")?;
        let scope = match self.str("scope")?.as_str() {
            "short" => ConversationScope::Short,
            "full" => ConversationScope::Full,
            other => return Err(self.err("scope", format!("expected short or full, got {other:?}"))),
        };
        let turns = match self.obj.get("turns") {
            Some(Value::Array(items)) => items
                .iter()
                .map(|t| {
                    let speaker = t.get("speaker").and_then(Value::as_str);
                    let text = t.get("text").and_then(Value::as_str);
                    match (speaker, text) {
                        (Some(s), Some(u)) => Ok(Turn { speaker: s.to_string(), utterance: u.to_string() }),
                        _ => Err(self.err("turns", "each turn needs string `speaker` and `text`")),
                    }
                })
                .collect::<Result<Vec<_>, _>>()?,
            Some(_) => return Err(self.err("turns", "expected a list")),
            None => return Err(self.err("turns", "missing")),
        };
        let context = Context::conversation(turns).map_err(|e| self.err("turns", e.to_string()))?;
        let (question, gold) = match self.str("qtype")?.as_str() {
            "choice" => self.choice()?,
            "dist" => {
                if self.obj.get("options").is_some_and(|v| !v.is_null()) {
                    return Err(self.err("options", "dist questions carry no options"));
                }
                let q = self.hint(Question::free_form(self.str("question")?))?;
                let gold = GoldAnswer::Text {
                    reference: self.str("answer")?,
                    wrong: self.opt_strings("wrong_answers")?.unwrap_or_default(),
                };
                (q, gold)
            }
            other => return Err(self.err("qtype", format!("expected choice or dist, got {other:?}"))),
        };
        Ok(ToMExample {
            id,
            family: DatasetFamily::Fantom,
            task: TaskType::ForwardBelief,
            context,
            question,
            gold,
            condition: None,
            pair_id: None,
            scope: Some(scope),
        })
    }
}

/// Parses records of one family from JSONL text. Blank lines are skipped.
pub fn parse_records(family: DatasetFamily, text: &str) -> Result<Vec<ToMExample>, DatasetError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(raw).map_err(|e| DatasetError::SchemaError {
            line,
            field: "<record>".into(),
            reason: e.to_string(),
        })?;
        let obj = value.as_object().ok_or_else(|| DatasetError::SchemaError {
            line,
            field: "<record>".into(),
            reason: "expected a JSON object".into(),
        })?;
        let record = Record { line, obj };
        out.push(match family {
            DatasetFamily::BigToM => record.bigtom()?,
            DatasetFamily::Fantom => record.fantom()?,
        });
    }
    check_ids_and_pairs(&out)?;
    Ok(out)
}

fn check_ids_and_pairs(examples: &[ToMExample]) -> Result<(), DatasetError> {
    let mut ids = HashSet::new();
    let mut pairs: HashMap<&str, Vec<&ToMExample>> = HashMap::new();
    for ex in examples {
        if !ids.insert(ex.id.as_str()) {
            return Err(DatasetError::DuplicateId(ex.id.clone()));
        }
        if let Some(p) = &ex.pair_id {
            pairs.entry(p).or_default().push(ex);
        }
    }
    let mut broken: Vec<_> = pairs
        .into_iter()
        .filter_map(|(pair_id, members)| {
            let reason = match members.as_slice() {
                [_] => return None,
                [a, b] if a.condition == b.condition => format!("both records have condition {:?}", a.condition),
                [a, b] if a.task != b.task => "records belong to different tasks".to_string(),
                [_, _] => return None,
                more => format!("{} records share this pair id", more.len()),
            };
            Some((pair_id.to_string(), reason))
        })
        .collect();
    broken.sort();
    match broken.into_iter().next() {
        Some((pair_id, reason)) => Err(DatasetError::BrokenPair { pair_id, reason }),
        None => Ok(()),
    }
}

/// Loads and filters the records named by a manifest.
pub fn load(manifest: &DatasetManifest) -> Result<Vec<ToMExample>, DatasetError> {
    manifest.validate()?;
    let text = std::fs::read_to_string(&manifest.path)
        .map_err(|source| DatasetError::Io { path: manifest.path.clone(), source })?;
    let mut examples = parse_records(manifest.family, &text)?;
    examples.retain(|e| manifest.matches(e));
    Ok(examples)
}

fn record_value(example: &ToMExample) -> Value {
    let mut obj = Map::new();
    obj.insert("id".into(), json!(example.id));
    match example.family {
        DatasetFamily::BigToM => {
            obj.insert("pair_id".into(), json!(example.pair_id));
            obj.insert("task".into(), json!(example.task));
            obj.insert("condition".into(), json!(example.condition));
            obj.insert("story".into(), json!(example.context.render()));
        }
        DatasetFamily::Fantom => {
            obj.insert("scope".into(), json!(example.scope));
            let qtype = match example.question.format {
                QuestionFormat::MultipleChoice => "choice",
                QuestionFormat::FreeForm => "dist",
            };
            obj.insert("qtype".into(), json!(qtype));
            if let Context::Conversation { turns } = &example.context {
                let turns: Vec<Value> =
                    turns.iter().map(|t| json!({"speaker": t.speaker, "text": t.utterance})).collect();
                obj.insert("turns".into(), Value::Array(turns));
            }
        }
    }
    obj.insert("question".into(), json!(example.question.text));
    match &example.gold {
        GoldAnswer::Option { index } => {
            obj.insert("options".into(), json!(example.question.options));
            obj.insert("answer_index".into(), json!(index));
        }
        GoldAnswer::Text { reference, wrong } => {
            obj.insert("answer".into(), json!(reference));
            if !wrong.is_empty() {
                obj.insert("wrong_answers".into(), json!(wrong));
            }
        }
    }
    if let Some(agent) = &example.question.target_agent_hint {
        obj.insert("target_agent".into(), json!(agent));
    }
    Value::Object(obj)
}

/// Writes examples back in the record schema, one per line.
pub fn serialize(examples: &[ToMExample]) -> String {
    let mut out = String::new();
    for ex in examples {
        let _ = writeln!(out, "{}", record_value(ex));
    }
    out
}

/// TB/FB pairs by `pair_id`, in order of first appearance, and everything else.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Pairing<'a> {
    pub pairs: Vec<(&'a ToMExample, &'a ToMExample)>,
    pub unpaired: Vec<&'a ToMExample>,
}

pub fn pair_conditions(examples: &[ToMExample]) -> Pairing<'_> {
    let mut groups: BTreeMap<usize, Vec<&ToMExample>> = BTreeMap::new();
    let mut first_seen: HashMap<&str, usize> = HashMap::new();
    let mut unpaired = Vec::new();
    for (i, ex) in examples.iter().enumerate() {
        match &ex.pair_id {
            Some(p) if ex.condition.is_some() => {
                let slot = *first_seen.entry(p).or_insert(i);
                groups.entry(slot).or_default().push(ex);
            }
            _ => unpaired.push(ex),
        }
    }
    let mut pairs = Vec::new();
    for (_, members) in groups {
        let tb = members.iter().find(|e| e.condition == Some(Condition::TrueBelief));
        let fb = members.iter().find(|e| e.condition == Some(Condition::FalseBelief));
        match (tb, fb, members.len()) {
            (Some(tb), Some(fb), 2) => pairs.push((*tb, *fb)),
            _ => unpaired.extend(members),
        }
    }
    Pairing { pairs, unpaired }
}

/// Counts by the `task`/`condition` axes used by `dataset validate`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct DatasetStats {
    pub examples: usize,
    pub pairs: usize,
    pub unpaired: usize,
    pub by_group: BTreeMap<String, usize>,
}

pub fn stats(examples: &[ToMExample]) -> DatasetStats {
    let pairing = pair_conditions(examples);
    let mut by_group = BTreeMap::new();
    for ex in examples {
        let key = match ex.family {
            DatasetFamily::BigToM => format!(
                "{}/{}",
                ex.task.short_name(),
                ex.condition.map(Condition::short_name).unwrap_or("-")
            ),
            DatasetFamily::Fantom => format!(
                "{}/{}",
                ex.scope.map(|s| s.label()).unwrap_or("-"),
                ex.question.format.label()
            ),
        };
        *by_group.entry(key).or_insert(0) += 1;
    }
    let unpaired = if examples.iter().any(|e| e.family == DatasetFamily::BigToM) {
        pairing.unpaired.len()
    } else {
        0
    };
    DatasetStats { examples: examples.len(), pairs: pairing.pairs.len(), unpaired, by_group }
}

/// Per-line diagnostics: every line that fails to parse, not just the first.
pub fn diagnose(family: DatasetFamily, text: &str) -> Vec<DatasetError> {
    let mut errors = Vec::new();
    let mut good = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        // Pad with blank lines so the reported line number stays correct.
        let padded = format!("{}{raw}", "\n".repeat(i));
        match parse_records(family, &padded) {
            Ok(mut ex) => good.append(&mut ex),
            Err(e) => errors.push(e),
        }
    }
    if let Err(e) = check_ids_and_pairs(&good) {
        errors.push(e);
    }
    errors
}

pub fn load_text(path: &Path) -> Result<String, DatasetError> {
    std::fs::read_to_string(path).map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })
}
