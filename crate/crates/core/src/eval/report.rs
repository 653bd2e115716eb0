use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::Verdict;
use crate::chain::Method;
use crate::tom::{Condition, ConversationScope, DatasetFamily, QuestionFormat, TaskType};

pub const TB_AND_FB: &str = "TB∧FB";

/// Metrics for one grouping of verdicts. Keys that do not apply are absent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub method: Method,
    pub family: DatasetFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<TaskType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scope: Option<ConversationScope>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qtype: Option<QuestionFormat>,
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_token_f1: Option<f64>,
    pub unparseable_rate: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub groups: Vec<GroupStats>,
    pub examples: usize,
    pub errored: usize,
    pub unparseable: usize,
    pub unparseable_rate: f64,
    /// Paired-family examples left out of the TB∧FB column.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unpaired: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Key {
    method: Method,
    family: DatasetFamily,
    task: Option<TaskType>,
    scope: Option<ConversationScope>,
    qtype: Option<QuestionFormat>,
    condition: Option<String>,
}

#[derive(Default)]
struct Acc {
    n: usize,
    correct: usize,
    unparseable: usize,
    f1: Vec<f64>,
}

impl Acc {
    fn push(&mut self, correct: bool, unparseable: bool, f1: Option<f64>) {
        self.n += 1;
        self.correct += usize::from(correct);
        self.unparseable += usize::from(unparseable);
        self.f1.extend(f1);
    }
}

fn ratio(a: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        a as f64 / n as f64
    }
}

/// Groups verdicts by method and task/condition (BigToM) or scope/format (FANToM).
///
/// TB∧FB counts complete pairs where both members are correct. The result does
/// not depend on the order of `verdicts`.
pub fn aggregate(verdicts: &[Verdict]) -> EvalReport {
    let mut sorted: Vec<&Verdict> = verdicts.iter().collect();
    sorted.sort_by(|a, b| (a.method, &a.example_id).cmp(&(b.method, &b.example_id)));

    let mut groups: BTreeMap<Key, Acc> = BTreeMap::new();
    let mut pairs: BTreeMap<(Method, TaskType, &str), Vec<&Verdict>> = BTreeMap::new();
    for v in &sorted {
        let key = match v.family {
            DatasetFamily::BigToM => Key {
                method: v.method,
                family: v.family,
                task: Some(v.task),
                scope: None,
                qtype: None,
                condition: v.condition.map(|c| c.short_name().to_string()),
            },
            DatasetFamily::Fantom => Key {
                method: v.method,
                family: v.family,
                task: None,
                scope: v.scope,
                qtype: Some(v.qtype),
                condition: None,
            },
        };
        groups.entry(key).or_default().push(v.correct, v.unparseable, v.token_f1);
        if let (Some(p), Some(_)) = (&v.pair_id, v.condition) {
            pairs.entry((v.method, v.task, p.as_str())).or_default().push(v);
        }
    }

    let mut unpaired = Vec::new();
    for ((method, task, _), members) in &pairs {
        let tb = members.iter().find(|v| v.condition == Some(Condition::TrueBelief));
        let fb = members.iter().find(|v| v.condition == Some(Condition::FalseBelief));
        match (tb, fb, members.len()) {
            (Some(tb), Some(fb), 2) => {
                let key = Key {
                    method: *method,
                    family: tb.family,
                    task: Some(*task),
                    scope: None,
                    qtype: None,
                    condition: Some(TB_AND_FB.to_string()),
                };
                groups
                    .entry(key)
                    .or_default()
                    .push(tb.correct && fb.correct, tb.unparseable || fb.unparseable, None);
            }
            _ => unpaired.extend(members.iter().map(|v| v.example_id.clone())),
        }
    }
    unpaired.sort();
    unpaired.dedup();

    let groups = groups
        .into_iter()
        .filter(|(_, acc)| acc.n > 0)
        .map(|(k, acc)| GroupStats {
            method: k.method,
            family: k.family,
            task: k.task,
            condition: k.condition,
            scope: k.scope,
            qtype: k.qtype,
            n: acc.n,
            correct: acc.correct,
            accuracy: ratio(acc.correct, acc.n),
            mean_token_f1: (!acc.f1.is_empty()).then(|| acc.f1.iter().sum::<f64>() / acc.f1.len() as f64),
            unparseable_rate: ratio(acc.unparseable, acc.n),
        })
        .collect();
    let unparseable = verdicts.iter().filter(|v| v.unparseable).count();
    EvalReport {
        groups,
        examples: verdicts.len(),
        errored: verdicts.iter().filter(|v| v.errored).count(),
        unparseable,
        unparseable_rate: ratio(unparseable, verdicts.len()),
        unpaired,
    }
}

fn pct(x: Option<f64>) -> String {
    match x {
        Some(v) => format!("{:.1}", v * 100.0),
        None => "-".to_string(),
    }
}

impl EvalReport {
    pub fn group(
        &self,
        method: Method,
        task: Option<TaskType>,
        condition: Option<&str>,
        scope: Option<ConversationScope>,
        qtype: Option<QuestionFormat>,
    ) -> Option<&GroupStats> {
        self.groups.iter().find(|g| {
            g.method == method
                && g.task == task
                && g.condition.as_deref() == condition
                && g.scope == scope
                && g.qtype == qtype
        })
    }

    /// Accuracy of a BigToM task under "TB", "FB" or [`TB_AND_FB`].
    pub fn bigtom_accuracy(&self, method: Method, task: TaskType, condition: &str) -> Option<f64> {
        self.group(method, Some(task), Some(condition), None, None).map(|g| g.accuracy)
    }

    fn methods(&self, family: DatasetFamily) -> Vec<Method> {
        let mut m: Vec<Method> = self.groups.iter().filter(|g| g.family == family).map(|g| g.method).collect();
        m.dedup();
        m
    }

    /// Text tables: one row per method, percentages with one decimal.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let bigtom = self.methods(DatasetFamily::BigToM);
        if !bigtom.is_empty() {
            let _ = write!(out, "{:<16}", "Method");
            for task in TaskType::ALL {
                let _ = write!(out, "| {:<23}", task.long_name());
            }
            let _ = write!(out, "\n{:<16}", "");
            for _ in TaskType::ALL {
                let _ = write!(out, "| {:>7}{:>7}{:>8} ", "TB", "FB", TB_AND_FB);
            }
            out.push('\n');
            for method in bigtom {
                let _ = write!(out, "{:<16}", method.label());
                for task in TaskType::ALL {
                    let cell = |c: &str| pct(self.bigtom_accuracy(method, task, c));
                    let _ = write!(out, "| {:>7}{:>7}{:>8} ", cell("TB"), cell("FB"), cell(TB_AND_FB));
                }
                out.push('\n');
            }
        }
        let fantom = self.methods(DatasetFamily::Fantom);
        if !fantom.is_empty() {
            if !out.is_empty() {
                out.push('\n');
            }
            let scopes = [ConversationScope::Short, ConversationScope::Full];
            let _ = write!(out, "{:<16}", "Method");
            for s in scopes {
                let _ = write!(out, "| {:<24}", s.label());
            }
            let _ = write!(out, "\n{:<16}", "");
            for _ in scopes {
                let _ = write!(out, "| {:>7}{:>7}{:>9} ", "Choice", "Dist.", "TokenF1");
            }
            out.push('\n');
            for method in fantom {
                let _ = write!(out, "{:<16}", method.label());
                for s in scopes {
                    let choice = self.group(method, None, None, Some(s), Some(QuestionFormat::MultipleChoice));
                    let dist = self.group(method, None, None, Some(s), Some(QuestionFormat::FreeForm));
                    let _ = write!(
                        out,
                        "| {:>7}{:>7}{:>9} ",
                        pct(choice.map(|g| g.accuracy)),
                        pct(dist.map(|g| g.accuracy)),
                        pct(dist.and_then(|g| g.mean_token_f1))
                    );
                }
                out.push('\n');
            }
        }
        let _ = writeln!(
            out,
            "\nexamples: {}  errored: {}  unparseable: {} ({:.1}%)  unpaired: {}",
            self.examples,
            self.errored,
            self.unparseable,
            self.unparseable_rate * 100.0,
            self.unpaired.len()
        );
        out
    }
}
