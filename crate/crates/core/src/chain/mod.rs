//! The chain executor.
//!
//! A run identifies the target agent, infers the related dimensions one
//! prompt at a time, and finally answers the question conditioned on the
//! inferred values. Every prompt and response is recorded in a
//! [`ChainTrace`].

mod plan;

pub use plan::{plan, AblationConfig, PlannedStep, StepKind};

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, BackendError, BackendRequest, DIMENSION_MAX_TOKENS, FINAL_MAX_TOKENS};
use crate::constraints::{ConstraintError, ConstraintRegistry, ConstraintSet};
use crate::prompting::{
    answer_format_instruction, parse_agent, parse_final_answer, parse_free_text, render_question, Bindings,
    ParsedAnswer, PromptError, TemplateSet,
};
use crate::tom::{queried_dimension, DatasetFamily, QuestionFormat, TaskType, ToMDimension, ToMExample};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ccotom,
    #[serde(rename = "onestep")]
    OneStep,
    Cot,
}

impl Method {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ccotom" => Some(Self::Ccotom),
            "onestep" | "one-step" | "one_step" => Some(Self::OneStep),
            "cot" => Some(Self::Cot),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Ccotom => "CCoToM",
            Self::OneStep => "CCoToM-OneStep",
            Self::Cot => "CoT",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Error)]
pub enum ChainError {
    #[error("invalid ablation: {0}")]
    InvalidAblation(String),
    #[error("{family} examples do not support the {task} task")]
    UnsupportedTask { family: DatasetFamily, task: TaskType },
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepValue {
    Text(String),
    Answer(ParsedAnswer),
}

impl StepValue {
    pub fn as_text(&self) -> &str {
        match self {
            Self::Text(t) => t,
            Self::Answer(a) => &a.text,
        }
    }
}

/// A prompt/response pair issued inside a step before its main prompt.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exchange {
    pub prompt: String,
    pub response: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainStep {
    pub kind: StepKind,
    pub prompt: String,
    pub constraint_set: ConstraintSet,
    pub conditioned_on: Vec<ToMDimension>,
    pub raw_response: String,
    pub parsed: StepValue,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub preliminary: Vec<Exchange>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepFailure {
    pub step_index: usize,
    pub kind: StepKind,
    pub message: String,
    /// The backend could not be reached (connection failure or timeout).
    pub connectivity: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainTrace {
    pub example_id: String,
    pub method: Method,
    #[serde(default, skip_serializing_if = "AblationConfig::is_complete")]
    pub ablation: AblationConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fact_question: Option<String>,
    pub steps: Vec<ChainStep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_answer: Option<ParsedAnswer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<StepFailure>,
}

impl ChainTrace {
    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }

    /// Parsed value of an intermediate inference, if that step ran.
    pub fn inferred(&self, dim: ToMDimension) -> Option<&str> {
        self.steps.iter().find_map(|s| match s.kind {
            StepKind::InferDimension(d) if d == dim => Some(s.parsed.as_text()),
            _ => None,
        })
    }
}

/// Runs chains against one backend with one set of templates and constraints.
pub struct ChainRunner<'a> {
    templates: &'a TemplateSet,
    constraints: &'a ConstraintRegistry,
    backend: &'a dyn Backend,
    model: String,
}

/// Connective words for a sequence of `n` instruction sentences.
fn connectives(n: usize) -> Vec<&'static str> {
    match n {
        0 => Vec::new(),
        1 => vec![""],
        2 => vec!["First", "Next"],
        _ => {
            let mut words = vec!["First", "Next"];
            words.extend(std::iter::repeat_n("Then", n - 3));
            words.push("Finally");
            words
        }
    }
}

fn join_dimensions(dims: &[ToMDimension]) -> String {
    let words: Vec<&str> = dims.iter().map(|d| d.word()).collect();
    match words.as_slice() {
        [] => String::new(),
        [one] => one.to_string(),
        [init @ .., last] => format!("{} and {}", init.join(", "), last),
    }
}

/// Step-by-step instructions for the one-step variant, derived from the plan.
pub fn one_step_instructions(steps: &[PlannedStep], agent: &str) -> String {
    let clauses: Vec<String> = steps
        .iter()
        .filter_map(|s| {
            let based_on = if s.conditioned_on.is_empty() {
                String::new()
            } else {
                format!(" based on the inferred {} of {agent}", join_dimensions(&s.conditioned_on))
            };
            match s.kind {
                StepKind::InferDimension(d) => Some(format!("infer the {} of {agent}{based_on}", d.word())),
                StepKind::FinalAnswer(_) => Some(format!("answer the question{based_on}")),
                _ => None,
            }
        })
        .collect();
    clauses
        .iter()
        .zip(connectives(clauses.len()))
        .map(|(clause, word)| {
            if word.is_empty() {
                let mut c = clause.chars();
                let first = c.next().map(|f| f.to_ascii_uppercase()).unwrap_or_default();
                format!("{first}{}.", c.as_str())
            } else {
                format!("{word}, {clause}.")
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

struct StepError {
    error: ChainError,
}

impl<E: Into<ChainError>> From<E> for StepError {
    fn from(e: E) -> Self {
        Self { error: e.into() }
    }
}

impl<'a> ChainRunner<'a> {
    pub fn new(
        templates: &'a TemplateSet,
        constraints: &'a ConstraintRegistry,
        backend: &'a dyn Backend,
        model: impl Into<String>,
    ) -> Self {
        Self { templates, constraints, backend, model: model.into() }
    }

    fn call(&self, prompt: &str, max_tokens: u32) -> Result<String, BackendError> {
        let request = BackendRequest::greedy(&self.model, prompt, max_tokens);
        Ok(self.backend.complete(&request)?.text)
    }

    fn base_bindings(&self, example: &ToMExample, agent: &str) -> Bindings {
        let mut b = Bindings::new();
        b.insert("context".into(), example.context.render());
        b.insert("agent".into(), agent.to_string());
        b.insert("question".into(), render_question(&example.question));
        b
    }

    /// Renders the prompt of a dimension-inference or final-answer step.
    fn step_prompt(
        &self,
        step: &PlannedStep,
        mut bindings: Bindings,
        agent: &str,
        responses: &[(ToMDimension, String)],
        answer_format: QuestionFormat,
    ) -> Result<String, StepError> {
        let template_id = step.template_id.expect("inference steps carry a template");
        let mut elide: Vec<&str> = ToMDimension::ALL
            .iter()
            .filter(|d| !step.conditioned_on.contains(d))
            .map(|d| d.response_placeholder())
            .collect();
        let constraints = self.constraints.render(&step.constraint_set, agent)?;
        if constraints.is_empty() {
            elide.push("constraints");
        }
        bindings.insert("constraints".into(), constraints);
        bindings.insert("answer_format".into(), answer_format_instruction(answer_format).to_string());
        for dim in &step.conditioned_on {
            let value = responses
                .iter()
                .find(|(d, _)| d == dim)
                .map(|(_, v)| v.clone())
                .expect("plan only conditions on earlier steps");
            bindings.insert(dim.response_placeholder().into(), value);
        }
        let template = self.templates.get(template_id)?.without_lines_referencing(&elide);
        Ok(template.render(&bindings)?)
    }

    fn identify_agent(&self, example: &ToMExample, trace: &mut ChainTrace) -> Result<String, StepError> {
        let queried = queried_dimension(example.task);
        let prompt = self.templates.agent_identification_prompt(&example.question, queried)?;
        let raw = self.call(&prompt, DIMENSION_MAX_TOKENS)?;
        let agent = match (parse_agent(&raw), &example.question.target_agent_hint) {
            (Ok(a), _) => a,
            (Err(PromptError::EmptyAgentResponse), Some(hint)) => hint.clone(),
            (Err(e), _) => return Err(e.into()),
        };
        trace.steps.push(ChainStep {
            kind: StepKind::AgentIdentification,
            prompt,
            constraint_set: ConstraintSet::empty(),
            conditioned_on: Vec::new(),
            raw_response: raw,
            parsed: StepValue::Text(agent.clone()),
            preliminary: Vec::new(),
        });
        trace.agent = Some(agent.clone());
        Ok(agent)
    }

    fn reconstruct_fact_question(
        &self,
        example: &ToMExample,
        agent: &str,
        trace: &mut ChainTrace,
    ) -> Result<String, StepError> {
        let (first, builder) = self.templates.fact_question_prompts(&example.question, agent)?;
        let info_raw = self.call(&first, DIMENSION_MAX_TOKENS)?;
        let info = non_empty_or_raw(parse_free_text(&info_raw), &info_raw);
        let second = builder.build(&info);
        let raw = self.call(&second, DIMENSION_MAX_TOKENS)?;
        let parsed = parse_free_text(&raw);
        let fact_question = non_empty_or_raw(parsed.lines().next().unwrap_or("").trim().to_string(), &raw);
        trace.steps.push(ChainStep {
            kind: StepKind::FactQuestionReconstruction,
            prompt: second,
            constraint_set: ConstraintSet::empty(),
            conditioned_on: Vec::new(),
            raw_response: raw,
            parsed: StepValue::Text(fact_question.clone()),
            preliminary: vec![Exchange { prompt: first, response: info_raw }],
        });
        trace.fact_question = Some(fact_question.clone());
        Ok(fact_question)
    }

    fn final_step(
        &self,
        example: &ToMExample,
        step_kind: StepKind,
        prompt: String,
        constraint_set: ConstraintSet,
        conditioned_on: Vec<ToMDimension>,
        trace: &mut ChainTrace,
    ) -> Result<(), StepError> {
        let raw = self.call(&prompt, FINAL_MAX_TOKENS)?;
        let answer = match parse_final_answer(&raw, &example.question) {
            Ok(a) => a,
            Err(PromptError::UnparseableChoice { .. }) => ParsedAnswer::unparseable(&raw),
            Err(e) => return Err(e.into()),
        };
        trace.steps.push(ChainStep {
            kind: step_kind,
            prompt,
            constraint_set,
            conditioned_on,
            raw_response: raw,
            parsed: StepValue::Answer(answer.clone()),
            preliminary: Vec::new(),
        });
        trace.final_answer = Some(answer);
        Ok(())
    }

    fn run_ccotom(&self, example: &ToMExample, steps: &[PlannedStep], trace: &mut ChainTrace) -> Result<(), StepError> {
        let mut agent = String::new();
        let mut fact_question = None;
        let mut responses: Vec<(ToMDimension, String)> = Vec::new();
        for step in steps {
            match step.kind {
                StepKind::AgentIdentification => agent = self.identify_agent(example, trace)?,
                StepKind::FactQuestionReconstruction => {
                    fact_question = Some(self.reconstruct_fact_question(example, &agent, trace)?)
                }
                StepKind::InferDimension(dim) => {
                    let mut bindings = self.base_bindings(example, &agent);
                    if let Some(fq) = &fact_question {
                        bindings.insert("fact_question".into(), fq.clone());
                    }
                    let prompt = self.step_prompt(step, bindings, &agent, &responses, QuestionFormat::FreeForm)?;
                    let raw = self.call(&prompt, DIMENSION_MAX_TOKENS)?;
                    let value = non_empty_or_raw(parse_free_text(&raw), &raw);
                    responses.push((dim, value.clone()));
                    trace.steps.push(ChainStep {
                        kind: step.kind,
                        prompt,
                        constraint_set: step.constraint_set.clone(),
                        conditioned_on: step.conditioned_on.clone(),
                        raw_response: raw,
                        parsed: StepValue::Text(value),
                        preliminary: Vec::new(),
                    });
                }
                StepKind::FinalAnswer(_) => {
                    let mut bindings = self.base_bindings(example, &agent);
                    if let Some(fq) = &fact_question {
                        bindings.insert("fact_question".into(), fq.clone());
                    }
                    let prompt =
                        self.step_prompt(step, bindings, &agent, &responses, example.question.format)?;
                    self.final_step(
                        example,
                        step.kind,
                        prompt,
                        step.constraint_set.clone(),
                        step.conditioned_on.clone(),
                        trace,
                    )?;
                }
            }
        }
        Ok(())
    }

    /// Union of every constraint set in the plan, first occurrence order.
    fn plan_constraints(steps: &[PlannedStep]) -> ConstraintSet {
        let mut all = ConstraintSet::empty();
        for s in steps {
            all.extend_dedup(&s.constraint_set);
        }
        all
    }

    /// Single prompt holding all constraints and step instructions of the plan.
    pub fn one_step_prompt(
        &self,
        example: &ToMExample,
        agent: &str,
        ablation: &AblationConfig,
    ) -> Result<String, ChainError> {
        let steps = plan(example.task, example.family, ablation)?;
        self.one_step_prompt_for(example, agent, &steps).map_err(|e| e.error)
    }

    fn one_step_prompt_for(
        &self,
        example: &ToMExample,
        agent: &str,
        steps: &[PlannedStep],
    ) -> Result<String, StepError> {
        let constraints = self.constraints.render(&Self::plan_constraints(steps), agent)?;
        let mut bindings = self.base_bindings(example, agent);
        let template = if constraints.is_empty() {
            self.templates.get("one_step")?.without_lines_referencing(&["constraints"])
        } else {
            self.templates.get("one_step")?.clone()
        };
        bindings.insert("constraints".into(), constraints);
        bindings.insert("instructions".into(), one_step_instructions(steps, agent));
        bindings.insert(
            "answer_format".into(),
            answer_format_instruction(example.question.format).to_string(),
        );
        Ok(template.render(&bindings)?)
    }

    fn run_one_step(&self, example: &ToMExample, steps: &[PlannedStep], trace: &mut ChainTrace) -> Result<(), StepError> {
        let agent = self.identify_agent(example, trace)?;
        let prompt = self.one_step_prompt_for(example, &agent, steps)?;
        let queried = queried_dimension(example.task);
        self.final_step(
            example,
            StepKind::FinalAnswer(queried),
            prompt,
            Self::plan_constraints(steps),
            Vec::new(),
            trace,
        )
    }

    fn run_cot(&self, example: &ToMExample, trace: &mut ChainTrace) -> Result<(), StepError> {
        let mut bindings = Bindings::new();
        bindings.insert("context".into(), example.context.render());
        bindings.insert("question".into(), render_question(&example.question));
        bindings.insert(
            "answer_format".into(),
            answer_format_instruction(example.question.format).to_string(),
        );
        let prompt = self.templates.get("cot")?.render(&bindings)?;
        self.final_step(
            example,
            StepKind::FinalAnswer(queried_dimension(example.task)),
            prompt,
            ConstraintSet::empty(),
            Vec::new(),
            trace,
        )
    }

    /// Runs one example. Failures are recorded in the trace, never raised.
    pub fn execute(&self, example: &ToMExample, method: Method, ablation: &AblationConfig) -> ChainTrace {
        let mut trace = ChainTrace {
            example_id: example.id.clone(),
            method,
            ablation: ablation.clone(),
            agent: None,
            fact_question: None,
            steps: Vec::new(),
            final_answer: None,
            error: None,
        };
        let planned = match method {
            Method::Cot => Ok(Vec::new()),
            _ => plan(example.task, example.family, ablation),
        };
        let result = match planned {
            Err(e) => Err(StepError { error: e }),
            Ok(steps) => match method {
                Method::Ccotom => self.run_ccotom(example, &steps, &mut trace),
                Method::OneStep => self.run_one_step(example, &steps, &mut trace),
                Method::Cot => self.run_cot(example, &mut trace),
            },
        };
        if let Err(StepError { error }) = result {
            let step_index = trace.steps.len();
            let kind = match method {
                Method::Ccotom => plan(example.task, example.family, ablation)
                    .ok()
                    .and_then(|s| s.get(step_index).map(|p| p.kind)),
                Method::OneStep if step_index == 0 => Some(StepKind::AgentIdentification),
                _ => None,
            }
            .unwrap_or(StepKind::FinalAnswer(queried_dimension(example.task)));
            let connectivity = matches!(&error, ChainError::Backend(b) if b.is_connectivity());
            trace.error = Some(StepFailure { step_index, kind, message: error.to_string(), connectivity });
        }
        trace
    }

    /// Runs every example on a pool of `workers` threads; output order matches input order.
    pub fn execute_batch(
        &self,
        examples: &[ToMExample],
        method: Method,
        ablation: &AblationConfig,
        workers: usize,
    ) -> Vec<ChainTrace> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .expect("thread pool");
        pool.install(|| examples.par_iter().map(|ex| self.execute(ex, method, ablation)).collect())
    }
}

fn non_empty_or_raw(parsed: String, raw: &str) -> String {
    if parsed.trim().is_empty() {
        raw.to_string()
    } else {
        parsed
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fb_steps() -> Vec<PlannedStep> {
        plan(TaskType::ForwardBelief, DatasetFamily::BigToM, &AblationConfig::complete()).unwrap()
    }

    #[test]
    fn forward_belief_instructions() {
        assert_eq!(
            one_step_instructions(&fb_steps(), "Hiro"),
            "First, infer the percept of Hiro. Next, answer the question based on the inferred percept of Hiro."
        );
    }

    #[test]
    fn forward_action_instructions() {
        let steps = plan(TaskType::ForwardAction, DatasetFamily::BigToM, &AblationConfig::complete()).unwrap();
        assert_eq!(
            one_step_instructions(&steps, "Luka"),
            "First, infer the percept of Luka. \
             Next, infer the belief of Luka based on the inferred percept of Luka. \
             Then, infer the desire of Luka. \
             Finally, answer the question based on the inferred belief and desire of Luka."
        );
    }

    #[test]
    fn ablated_single_instruction() {
        let steps =
            plan(TaskType::ForwardBelief, DatasetFamily::BigToM, &AblationConfig::without(ToMDimension::Percept)).unwrap();
        assert_eq!(one_step_instructions(&steps, "Hiro"), "Answer the question.");
    }

    #[test]
    fn connective_sequences() {
        assert_eq!(connectives(3), vec!["First", "Next", "Finally"]);
        assert_eq!(connectives(5), vec!["First", "Next", "Then", "Then", "Finally"]);
    }

    #[test]
    fn method_names_round_trip() {
        for m in [Method::Ccotom, Method::OneStep, Method::Cot] {
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(Method::parse(json.trim_matches('"')), Some(m));
        }
    }
}
