//! Prompt rendering and response parsing.
//!
//! Template bodies live as plain text files under `templates/` and are
//! compiled into the crate; [`TemplateSet::load_dir`] swaps in edited copies
//! without a rebuild.

mod parse;
mod template;

pub use parse::{
    option_letter, parse_agent, parse_final_answer, parse_free_text, AnswerKind, ParsedAnswer,
};
pub use template::{
    expected_placeholders, Bindings, PromptTemplate, Segment, TemplateCheck, TemplateSet, KNOWN_PLACEHOLDERS,
};

use thiserror::Error;

use crate::tom::{Question, QuestionFormat, ToMDimension};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("missing binding for placeholder `{0}`")]
    MissingPlaceholder(String),
    #[error("template `{template}` uses unknown placeholder `{name}`")]
    UnknownPlaceholder { template: String, name: String },
    #[error("no template with id `{0}`")]
    UnknownTemplate(String),
    #[error("the {0} of an agent cannot be the subject of a question")]
    UnqueryableDimension(ToMDimension),
    #[error("agent identification response is empty")]
    EmptyAgentResponse,
    #[error("could not map the response to one of {options} options")]
    UnparseableChoice { options: usize },
    #[error("template io: {0}")]
    Io(String),
}

pub const MULTIPLE_CHOICE_INSTRUCTION: &str = "Write your final answer as 'Answer: (<option>) <answer>'. \
Always pick an option, do not say none of the above or that there is not enough information.";

pub const FREE_FORM_INSTRUCTION: &str = "Write your final answer as 'Answer: <answer>'. \
Answer in one or two sentences and do not say that there is not enough information.";

pub fn answer_format_instruction(format: QuestionFormat) -> &'static str {
    match format {
        QuestionFormat::MultipleChoice => MULTIPLE_CHOICE_INSTRUCTION,
        QuestionFormat::FreeForm => FREE_FORM_INSTRUCTION,
    }
}

/// Question text followed by lettered options, one per line.
pub fn render_question(question: &Question) -> String {
    let mut out = question.text.clone();
    for (i, option) in question.options.iter().enumerate() {
        out.push_str(&format!("\n({}) {}", option_letter(i), option));
    }
    out
}

fn bindings<const N: usize>(pairs: [(&str, &str); N]) -> Bindings {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

impl TemplateSet {
    /// "Whose <dimension> is queried in the given question?" followed by the question.
    pub fn agent_identification_prompt(
        &self,
        question: &Question,
        queried: ToMDimension,
    ) -> Result<String, PromptError> {
        let id = match queried {
            ToMDimension::Belief => "agent_id_belief",
            ToMDimension::Action => "agent_id_action",
            other => return Err(PromptError::UnqueryableDimension(other)),
        };
        self.get(id)?.render(&bindings([("question", question.text.as_str())]))
    }

    /// The two prompts that turn a belief question into its fact question.
    ///
    /// The first asks what information about the agent's belief is queried;
    /// the returned builder wraps the model's answer into the second prompt.
    pub fn fact_question_prompts(
        &self,
        belief_question: &Question,
        agent: &str,
    ) -> Result<(String, FactQuestionBuilder), PromptError> {
        let first = self
            .get("fact_information")?
            .render(&bindings([("question", belief_question.text.as_str()), ("agent", agent)]))?;
        let builder = FactQuestionBuilder { template: self.get("fact_question")?.clone() };
        Ok((first, builder))
    }
}

/// Second half of fact-question reconstruction.
#[derive(Clone, Debug)]
pub struct FactQuestionBuilder {
    template: PromptTemplate,
}

impl FactQuestionBuilder {
    pub fn build(&self, information: &str) -> String {
        self.template
            .render(&bindings([("information", information)]))
            .expect("fact_question template only needs `information`")
    }
}
