//! Domain vocabulary: ToM dimensions, the causal graph between them, task
//! types, contexts, questions and benchmark examples.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One of the four mental-state dimensions an agent is modelled with.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToMDimension {
    Percept,
    Belief,
    Desire,
    Action,
}

impl ToMDimension {
    pub const ALL: [ToMDimension; 4] = [Self::Percept, Self::Belief, Self::Desire, Self::Action];

    /// Lowercase English word used inside prompts.
    pub fn word(self) -> &'static str {
        match self {
            Self::Percept => "percept",
            Self::Belief => "belief",
            Self::Desire => "desire",
            Self::Action => "action",
        }
    }

    /// Name of the prompt placeholder that carries this dimension's inferred value.
    pub fn response_placeholder(self) -> &'static str {
        match self {
            Self::Percept => "percept_response",
            Self::Belief => "belief_response",
            Self::Desire => "desire_response",
            Self::Action => "action_response",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "percept" => Some(Self::Percept),
            "belief" => Some(Self::Belief),
            "desire" => Some(Self::Desire),
            "action" => Some(Self::Action),
            _ => None,
        }
    }
}

impl fmt::Display for ToMDimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.word())
    }
}

/// The fixed causal model: percept determines belief, and belief together
/// with desire determines action.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CausalGraph;

impl CausalGraph {
    const EDGES: [(ToMDimension, ToMDimension); 3] = [
        (ToMDimension::Percept, ToMDimension::Belief),
        (ToMDimension::Belief, ToMDimension::Action),
        (ToMDimension::Desire, ToMDimension::Action),
    ];

    pub fn edges(&self) -> &'static [(ToMDimension, ToMDimension)] {
        &Self::EDGES
    }

    pub fn parents(&self, dim: ToMDimension) -> Vec<ToMDimension> {
        Self::EDGES
            .iter()
            .filter(|(_, target)| *target == dim)
            .map(|(source, _)| *source)
            .collect()
    }

    pub fn children(&self, dim: ToMDimension) -> Vec<ToMDimension> {
        Self::EDGES
            .iter()
            .filter(|(source, _)| *source == dim)
            .map(|(_, target)| *target)
            .collect()
    }
}

/// The three reasoning task types.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskType {
    ForwardBelief,
    ForwardAction,
    BackwardBelief,
}

impl TaskType {
    pub const ALL: [TaskType; 3] = [Self::ForwardBelief, Self::ForwardAction, Self::BackwardBelief];

    pub fn short_name(self) -> &'static str {
        match self {
            Self::ForwardBelief => "FB",
            Self::ForwardAction => "FA",
            Self::BackwardBelief => "BB",
        }
    }

    pub fn long_name(self) -> &'static str {
        match self {
            Self::ForwardBelief => "Forward Belief",
            Self::ForwardAction => "Forward Action",
            Self::BackwardBelief => "Backward Belief",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "forward_belief" | "fb" => Some(Self::ForwardBelief),
            "forward_action" | "fa" => Some(Self::ForwardAction),
            "backward_belief" | "bb" => Some(Self::BackwardBelief),
            _ => None,
        }
    }
}

impl fmt::Display for TaskType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

/// The dimension a task's question asks about.
pub fn queried_dimension(task: TaskType) -> ToMDimension {
    match task {
        TaskType::ForwardBelief | TaskType::BackwardBelief => ToMDimension::Belief,
        TaskType::ForwardAction => ToMDimension::Action,
    }
}

/// Dimensions inferred before the queried one, in prompting order.
pub fn related_dimensions(task: TaskType) -> Vec<ToMDimension> {
    use ToMDimension::*;
    match task {
        TaskType::ForwardBelief => vec![Percept],
        TaskType::ForwardAction => vec![Percept, Belief, Desire],
        TaskType::BackwardBelief => vec![Desire, Action],
    }
}

/// Dimensions the final inference conditions on.
///
/// Forward tasks use the graph parents of the queried dimension. Backward
/// belief conditions on action and desire, which uses the action edge in
/// reverse and is therefore listed explicitly rather than derived.
pub fn final_conditioning(task: TaskType) -> Vec<ToMDimension> {
    use ToMDimension::*;
    match task {
        TaskType::ForwardBelief => vec![Percept],
        TaskType::ForwardAction => vec![Belief, Desire],
        TaskType::BackwardBelief => vec![Action, Desire],
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DatasetFamily {
    #[serde(rename = "bigtom")]
    BigToM,
    #[serde(rename = "fantom")]
    Fantom,
}

impl DatasetFamily {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bigtom" => Some(Self::BigToM),
            "fantom" => Some(Self::Fantom),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::BigToM => "BigToM",
            Self::Fantom => "FANToM",
        }
    }
}

impl fmt::Display for DatasetFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Condition {
    #[serde(rename = "TB")]
    TrueBelief,
    #[serde(rename = "FB")]
    FalseBelief,
}

impl Condition {
    pub fn short_name(self) -> &'static str {
        match self {
            Self::TrueBelief => "TB",
            Self::FalseBelief => "FB",
        }
    }
}

/// How much of a conversation the context covers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConversationScope {
    Short,
    Full,
}

impl ConversationScope {
    pub fn label(self) -> &'static str {
        match self {
            Self::Short => "Short Conversation",
            Self::Full => "Full Conversation",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: String,
    pub utterance: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Context {
    Narrative { text: String },
    Conversation { turns: Vec<Turn> },
}

impl Context {
    pub fn narrative(text: impl Into<String>) -> Self {
        Self::Narrative { text: text.into() }
    }

    pub fn conversation(turns: Vec<Turn>) -> Result<Self, DomainError> {
        for (i, turn) in turns.iter().enumerate() {
            if turn.speaker.trim().is_empty() || turn.utterance.trim().is_empty() {
                return Err(DomainError::EmptyTurn(i));
            }
        }
        Ok(Self::Conversation { turns })
    }

    /// Text form used inside prompts. Conversations render one `speaker: utterance` line per turn.
    pub fn render(&self) -> String {
        match self {
            Self::Narrative { text } => text.clone(),
            Self::Conversation { turns } => turns
                .iter()
                .map(|t| format!("{}: {}", t.speaker, t.utterance))
                .collect::<Vec<_>>()
                .join("\n"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionFormat {
    MultipleChoice,
    FreeForm,
}

impl QuestionFormat {
    /// FANToM-style column label.
    pub fn label(self) -> &'static str {
        match self {
            Self::MultipleChoice => "Choice",
            Self::FreeForm => "Dist",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub text: String,
    pub format: QuestionFormat,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub options: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_agent_hint: Option<String>,
}

impl Question {
    pub fn multiple_choice(text: impl Into<String>, options: Vec<String>) -> Result<Self, DomainError> {
        if options.len() < 2 {
            return Err(DomainError::TooFewOptions(options.len()));
        }
        Ok(Self {
            text: text.into(),
            format: QuestionFormat::MultipleChoice,
            options,
            target_agent_hint: None,
        })
    }

    pub fn free_form(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            format: QuestionFormat::FreeForm,
            options: Vec::new(),
            target_agent_hint: None,
        }
    }

    pub fn with_agent_hint(mut self, agent: impl Into<String>) -> Self {
        self.target_agent_hint = Some(agent.into());
        self
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        match self.format {
            QuestionFormat::MultipleChoice if self.options.len() < 2 => {
                Err(DomainError::TooFewOptions(self.options.len()))
            }
            QuestionFormat::FreeForm if !self.options.is_empty() => Err(DomainError::OptionsOnFreeForm),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GoldAnswer {
    Option { index: usize },
    Text {
        reference: String,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        wrong: Vec<String>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToMExample {
    pub id: String,
    pub family: DatasetFamily,
    pub task: TaskType,
    pub context: Context,
    pub question: Question,
    pub gold: GoldAnswer,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<Condition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scope: Option<ConversationScope>,
}

impl ToMExample {
    /// Checks the cross-field invariants of a single example.
    pub fn validate(&self) -> Result<(), DomainError> {
        self.question.validate()?;
        if let Context::Conversation { turns } = &self.context {
            if let Some(i) = turns
                .iter()
                .position(|t| t.speaker.trim().is_empty() || t.utterance.trim().is_empty())
            {
                return Err(DomainError::EmptyTurn(i));
            }
        }
        match (&self.gold, self.question.format) {
            (GoldAnswer::Option { index }, QuestionFormat::MultipleChoice) => {
                if *index >= self.question.options.len() {
                    return Err(DomainError::GoldOutOfRange {
                        index: *index,
                        options: self.question.options.len(),
                    });
                }
            }
            (GoldAnswer::Text { reference, .. }, QuestionFormat::FreeForm) => {
                if reference.trim().is_empty() {
                    return Err(DomainError::EmptyGold);
                }
            }
            _ => return Err(DomainError::GoldFormatMismatch),
        }
        if self.condition.is_some() && self.pair_id.is_none() {
            return Err(DomainError::ConditionWithoutPair);
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DomainError {
    #[error("multiple-choice question needs at least two options, got {0}")]
    TooFewOptions(usize),
    #[error("free-form question must not carry options")]
    OptionsOnFreeForm,
    #[error("conversation turn {0} has an empty speaker or utterance")]
    EmptyTurn(usize),
    #[error("gold option {index} out of range for {options} options")]
    GoldOutOfRange { index: usize, options: usize },
    #[error("gold answer kind does not match the question format")]
    GoldFormatMismatch,
    #[error("gold reference text is empty")]
    EmptyGold,
    #[error("condition is set but pair_id is missing")]
    ConditionWithoutPair,
}

#[cfg(test)]
mod tests {
    use super::*;
    use ToMDimension::*;

    #[test]
    fn queried_dimension_per_task() {
        assert_eq!(queried_dimension(TaskType::ForwardBelief), Belief);
        assert_eq!(queried_dimension(TaskType::ForwardAction), Action);
        assert_eq!(queried_dimension(TaskType::BackwardBelief), Belief);
    }

    #[test]
    fn related_dimensions_in_prompting_order() {
        assert_eq!(related_dimensions(TaskType::ForwardBelief), vec![Percept]);
        assert_eq!(related_dimensions(TaskType::ForwardAction), vec![Percept, Belief, Desire]);
        assert_eq!(related_dimensions(TaskType::BackwardBelief), vec![Desire, Action]);
    }

    #[test]
    fn graph_parents() {
        let g = CausalGraph;
        assert_eq!(g.parents(Belief), vec![Percept]);
        assert_eq!(g.parents(Action), vec![Belief, Desire]);
        assert!(g.parents(Percept).is_empty());
        assert!(g.parents(Desire).is_empty());
        assert_eq!(g.edges().len(), 3);
    }

    #[test]
    fn graph_is_acyclic() {
        let g = CausalGraph;
        // Kahn's algorithm over four nodes.
        let mut indegree: Vec<usize> = ToMDimension::ALL.iter().map(|d| g.parents(*d).len()).collect();
        let mut ready: Vec<ToMDimension> = ToMDimension::ALL
            .iter()
            .copied()
            .filter(|d| g.parents(*d).is_empty())
            .collect();
        let mut seen = 0;
        while let Some(d) = ready.pop() {
            seen += 1;
            for c in g.children(d) {
                let i = ToMDimension::ALL.iter().position(|x| *x == c).unwrap();
                indegree[i] -= 1;
                if indegree[i] == 0 {
                    ready.push(c);
                }
            }
        }
        assert_eq!(seen, 4);
    }

    #[test]
    fn queried_never_related_and_conditioning_available() {
        let g = CausalGraph;
        for task in TaskType::ALL {
            let q = queried_dimension(task);
            let related = related_dimensions(task);
            assert!(!related.contains(&q));
            for d in final_conditioning(task) {
                assert!(related.contains(&d));
            }
            if task != TaskType::BackwardBelief {
                let mut parents = g.parents(q);
                let mut cond = final_conditioning(task);
                parents.sort();
                cond.sort();
                assert_eq!(parents, cond);
            }
        }
    }

    #[test]
    fn conversation_renders_one_line_per_turn() {
        let ctx = Context::conversation(vec![
            Turn { speaker: "Kali".into(), utterance: "We have a tradition.".into() },
            Turn { speaker: "Jerry".into(), utterance: "Tell me!".into() },
        ])
        .unwrap();
        assert_eq!(ctx.render(), "Kali: We have a tradition.\nJerry: Tell me!");
    }

    #[test]
    fn empty_turn_rejected() {
        let err = Context::conversation(vec![Turn { speaker: " ".into(), utterance: "hi".into() }]);
        assert_eq!(err, Err(DomainError::EmptyTurn(0)));
    }

    #[test]
    fn multiple_choice_needs_two_options() {
        assert_eq!(
            Question::multiple_choice("q", vec!["only".into()]),
            Err(DomainError::TooFewOptions(1))
        );
    }

    #[test]
    fn example_gold_range_checked() {
        let ex = ToMExample {
            id: "x".into(),
            family: DatasetFamily::BigToM,
            task: TaskType::ForwardBelief,
            context: Context::narrative("story"),
            question: Question::multiple_choice("q", vec!["a".into(), "b".into()]).unwrap(),
            gold: GoldAnswer::Option { index: 2 },
            condition: Some(Condition::TrueBelief),
            pair_id: Some("p".into()),
            scope: None,
        };
        assert_eq!(ex.validate(), Err(DomainError::GoldOutOfRange { index: 2, options: 2 }));
    }
}
