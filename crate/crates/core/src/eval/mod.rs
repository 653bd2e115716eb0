//! Scoring of chain traces and aggregation into reports.

mod embed;
mod report;

pub use embed::{
    cosine_distance, score_dist, DistOutcome, Embedder, EmbedderConfig, EmbedderKind, HttpEmbedder,
    OrthogonalEmbedder, DEFAULT_TAU,
};
pub use report::{aggregate, EvalReport, GroupStats, TB_AND_FB};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{ChainTrace, Method};
use crate::prompting::{AnswerKind, ParsedAnswer};
use crate::tom::{Condition, ConversationScope, DatasetFamily, GoldAnswer, QuestionFormat, TaskType, ToMExample};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("embedder error: {0}")]
    Embedder(String),
    #[error("embedding dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("trace refers to unknown example id {0}")]
    UnknownExampleId(String),
    #[error("free-form questions need an embedder")]
    NoEmbedder,
    #[error("config: {0}")]
    Config(String),
}

pub fn score_mc(parsed: &ParsedAnswer, gold_index: usize) -> bool {
    parsed.kind == AnswerKind::OptionChoice && parsed.option_index == Some(gold_index)
}

/// Lowercase, drop ASCII punctuation and the articles a/an/the, split on whitespace.
pub fn normalize_tokens(text: &str) -> Vec<String> {
    let lowered: String = text
        .to_lowercase()
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    lowered
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .map(str::to_string)
        .collect()
}

pub fn token_f1(prediction: &str, gold: &str) -> f64 {
    let pred = normalize_tokens(prediction);
    let gold = normalize_tokens(gold);
    match (pred.is_empty(), gold.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &gold {
        *counts.entry(t).or_insert(0) += 1;
    }
    let mut common = 0usize;
    for t in &pred {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    // Equal to 2PR/(P+R) with P = common/|pred| and R = common/|gold|.
    2.0 * common as f64 / (pred.len() + gold.len()) as f64
}

/// Outcome for one example under one method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub example_id: String,
    pub method: Method,
    pub family: DatasetFamily,
    pub task: TaskType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<Condition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scope: Option<ConversationScope>,
    pub qtype: QuestionFormat,
    pub correct: bool,
    pub unparseable: bool,
    /// The chain stopped before producing an answer.
    #[serde(default)]
    pub errored: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_f1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dist: Option<DistOutcome>,
}

pub fn score_trace(
    trace: &ChainTrace,
    example: &ToMExample,
    embedder: Option<&dyn Embedder>,
    tau: f64,
) -> Result<Verdict, EvalError> {
    let mut verdict = Verdict {
        example_id: example.id.clone(),
        method: trace.method,
        family: example.family,
        task: example.task,
        condition: example.condition,
        pair_id: example.pair_id.clone(),
        scope: example.scope,
        qtype: example.question.format,
        correct: false,
        unparseable: false,
        errored: false,
        token_f1: None,
        dist: None,
    };
    let answer = match (&trace.final_answer, &trace.error) {
        (Some(a), None) => a,
        _ => {
            verdict.errored = true;
            if example.question.format == QuestionFormat::FreeForm {
                verdict.token_f1 = Some(0.0);
            }
            return Ok(verdict);
        }
    };
    verdict.unparseable = answer.is_unparseable();
    match &example.gold {
        GoldAnswer::Option { index } => verdict.correct = score_mc(answer, *index),
        GoldAnswer::Text { reference, wrong } => {
            verdict.token_f1 = Some(token_f1(&answer.text, reference));
            let outcome = score_dist(&answer.text, reference, wrong, embedder.ok_or(EvalError::NoEmbedder)?, tau)?;
            verdict.correct = outcome.correct;
            verdict.dist = Some(outcome);
        }
    }
    Ok(verdict)
}

/// Scores saved traces against the examples they name.
pub fn score_traces(
    traces: &[ChainTrace],
    examples: &[ToMExample],
    embedder: Option<&dyn Embedder>,
    tau: f64,
) -> Result<Vec<Verdict>, EvalError> {
    let by_id: HashMap<&str, &ToMExample> = examples.iter().map(|e| (e.id.as_str(), e)).collect();
    traces
        .iter()
        .map(|t| {
            let ex = by_id
                .get(t.example_id.as_str())
                .ok_or_else(|| EvalError::UnknownExampleId(t.example_id.clone()))?;
            score_trace(t, ex, embedder, tau)
        })
        .collect()
}
