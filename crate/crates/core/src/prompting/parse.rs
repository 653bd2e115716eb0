use serde::{Deserialize, Serialize};

use super::PromptError;
use crate::tom::{Question, QuestionFormat};

const ANSWER_LABEL: &str = "answer:";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerKind {
    OptionChoice,
    FreeText,
    /// A multiple-choice response that matched no option; scored as wrong.
    Unparseable,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedAnswer {
    pub kind: AnswerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub option_index: Option<usize>,
    pub text: String,
    pub raw: String,
}

impl ParsedAnswer {
    pub fn unparseable(raw: &str) -> Self {
        Self {
            kind: AnswerKind::Unparseable,
            option_index: None,
            text: String::new(),
            raw: raw.to_string(),
        }
    }

    pub fn is_unparseable(&self) -> bool {
        self.kind == AnswerKind::Unparseable
    }
}

/// `a`, `b`, `c`, ... for 0, 1, 2, ...
pub fn option_letter(index: usize) -> char {
    (b'a' + (index % 26) as u8) as char
}

/// Byte offset just past the last `Answer:` label (ASCII case-insensitive).
fn after_last_label(response: &str) -> Option<usize> {
    response
        .to_ascii_lowercase()
        .rfind(ANSWER_LABEL)
        .map(|i| i + ANSWER_LABEL.len())
}

/// Free-text answer: whatever follows the last `Answer:` label, or the whole
/// response when there is none.
pub fn parse_free_text(response: &str) -> String {
    match after_last_label(response) {
        Some(start) => response[start..].trim().to_string(),
        None => response.trim().to_string(),
    }
}

/// Agent name from an agent-identification response.
pub fn parse_agent(response: &str) -> Result<String, PromptError> {
    let mut text = response.trim();
    if text.len() >= ANSWER_LABEL.len() && text[..ANSWER_LABEL.len()].eq_ignore_ascii_case(ANSWER_LABEL) {
        text = text[ANSWER_LABEL.len()..].trim_start();
    }
    let first = text.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
    let name = first.trim_end_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace());
    if name.is_empty() {
        return Err(PromptError::EmptyAgentResponse);
    }
    Ok(name.to_string())
}

/// Every `(<token>)` in `span` whose token maps to an option index, with its position.
fn parenthesized_options(span: &str, options: usize) -> Vec<usize> {
    let bytes = span.as_bytes();
    let mut found = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'(' {
            if let Some(close) = span[i + 1..].find(')') {
                let token = span[i + 1..i + 1 + close].trim();
                if let Some(index) = token_to_index(token) {
                    if index < options {
                        found.push(index);
                    }
                }
            }
        }
        i += 1;
    }
    found
}

fn token_to_index(token: &str) -> Option<usize> {
    let mut chars = token.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) if c.is_ascii_alphabetic() => Some((c.to_ascii_lowercase() as u8 - b'a') as usize),
        _ if !token.is_empty() && token.bytes().all(|b| b.is_ascii_digit()) => {
            token.parse::<usize>().ok().filter(|n| *n >= 1).map(|n| n - 1)
        }
        _ => None,
    }
}

fn normalize_option(text: &str) -> String {
    text.trim()
        .trim_end_matches(|c: char| c.is_ascii_punctuation())
        .to_lowercase()
}

/// Parses the response to the final question.
///
/// Multiple choice: after the last `Answer:` label, the first `(<letter>)`
/// or `(<number>)` naming an existing option wins. Without a label the last
/// such marker in the whole response is used. Failing that, the answer span
/// must contain the text of exactly one option.
pub fn parse_final_answer(response: &str, question: &Question) -> Result<ParsedAnswer, PromptError> {
    let span = parse_free_text(response);
    match question.format {
        QuestionFormat::FreeForm => Ok(ParsedAnswer {
            kind: AnswerKind::FreeText,
            option_index: None,
            text: span,
            raw: response.to_string(),
        }),
        QuestionFormat::MultipleChoice => {
            let n = question.options.len();
            let marker = if after_last_label(response).is_some() {
                parenthesized_options(&span, n).first().copied()
            } else {
                parenthesized_options(&span, n).last().copied()
            };
            let index = marker.or_else(|| {
                let lower = span.to_lowercase();
                let hits: Vec<usize> = question
                    .options
                    .iter()
                    .enumerate()
                    .filter(|(_, o)| {
                        let o = normalize_option(o);
                        !o.is_empty() && lower.contains(&o)
                    })
                    .map(|(i, _)| i)
                    .collect();
                (hits.len() == 1).then(|| hits[0])
            });
            match index {
                Some(i) => Ok(ParsedAnswer {
                    kind: AnswerKind::OptionChoice,
                    option_index: Some(i),
                    text: question.options[i].clone(),
                    raw: response.to_string(),
                }),
                None => Err(PromptError::UnparseableChoice { options: n }),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn luka_question() -> Question {
        Question::multiple_choice(
            "What will Luka do?",
            vec![
                "Luka will wait for the rain to water the plants.".into(),
                "Luka will water the plants with a watering can.".into(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn option_marker_after_label() {
        let r = "The percept suggests ... so Answer: (a) Luka will wait for the rain to water the plants.";
        let p = parse_final_answer(r, &luka_question()).unwrap();
        assert_eq!(p.kind, AnswerKind::OptionChoice);
        assert_eq!(p.option_index, Some(0));
    }

    #[test]
    fn uppercase_and_digit_markers() {
        let q = luka_question();
        assert_eq!(parse_final_answer("Answer: (B)", &q).unwrap().option_index, Some(1));
        assert_eq!(parse_final_answer("Answer: (2) water", &q).unwrap().option_index, Some(1));
    }

    #[test]
    fn last_label_wins() {
        let q = luka_question();
        let r = "Answer: (a) maybe.\nOn reflection, Answer: (b) Luka will water the plants with a watering can.";
        assert_eq!(parse_final_answer(r, &q).unwrap().option_index, Some(1));
    }

    #[test]
    fn text_fallback() {
        let q = luka_question();
        let r = "I think luka will water the plants with a watering can";
        assert_eq!(parse_final_answer(r, &q).unwrap().option_index, Some(1));
    }

    #[test]
    fn out_of_range_marker_ignored() {
        let q = luka_question();
        assert_eq!(
            parse_final_answer("Answer: (c)", &q),
            Err(PromptError::UnparseableChoice { options: 2 })
        );
    }

    #[test]
    fn unparseable_choice() {
        let q = Question::multiple_choice("?", vec!["apple".into(), "banana".into()]).unwrap();
        assert_eq!(
            parse_final_answer("I cannot decide", &q),
            Err(PromptError::UnparseableChoice { options: 2 })
        );
    }

    #[test]
    fn free_form_after_label() {
        let q = Question::free_form("What does Luka want?");
        let p = parse_final_answer("Answer: water the plants in the park", &q).unwrap();
        assert_eq!(p.kind, AnswerKind::FreeText);
        assert_eq!(p.text, "water the plants in the park");
    }

    #[test]
    fn free_form_without_label() {
        let q = Question::free_form("?");
        assert_eq!(parse_final_answer("  just text \n", &q).unwrap().text, "just text");
    }

    #[test]
    fn agent_parsing() {
        assert_eq!(parse_agent("Hiro").unwrap(), "Hiro");
        assert_eq!(parse_agent("Answer: Luka.").unwrap(), "Luka");
        assert_eq!(parse_agent("\n  Noor!\nbecause the question says so").unwrap(), "Noor");
        assert_eq!(parse_agent("   "), Err(PromptError::EmptyAgentResponse));
        assert_eq!(parse_agent("Answer: ..."), Err(PromptError::EmptyAgentResponse));
    }

    proptest! {
        #[test]
        fn format_then_parse_recovers_index(
            options in proptest::collection::vec("[a-z ()]{1,24}", 2..8),
            pick in 0usize..8,
        ) {
            let i = pick % options.len();
            let q = Question::multiple_choice("Q", options.clone()).unwrap();
            let response = format!("Answer: ({}) {}", option_letter(i), options[i]);
            prop_assert_eq!(parse_final_answer(&response, &q).unwrap().option_index, Some(i));
        }

        #[test]
        fn parsed_index_in_range(
            options in proptest::collection::vec("[a-z]{1,8}", 2..6),
            response in ".{0,80}",
        ) {
            let q = Question::multiple_choice("Q", options.clone()).unwrap();
            if let Ok(p) = parse_final_answer(&response, &q) {
                prop_assert!(p.option_index.unwrap() < options.len());
            }
        }
    }
}
