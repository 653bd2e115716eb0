use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use super::PromptError;

/// Every placeholder name a template may use.
pub const KNOWN_PLACEHOLDERS: &[&str] = &[
    "context",
    "question",
    "agent",
    "constraints",
    "percept_response",
    "belief_response",
    "desire_response",
    "action_response",
    "fact_question",
    "answer_format",
    "information",
    "instructions",
];

pub type Bindings = BTreeMap<String, String>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Segment {
    Literal(String),
    Placeholder(String),
}

/// A prompt body with `{name}` placeholders.
///
/// A `{` that does not open a lowercase identifier followed by `}` is kept
/// as literal text.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PromptTemplate {
    id: String,
    source: String,
    segments: Vec<Segment>,
}

impl PromptTemplate {
    pub fn parse(id: impl Into<String>, source: &str) -> Result<Self, PromptError> {
        let id = id.into();
        let source = source.strip_suffix('\n').unwrap_or(source).to_string();
        let mut segments = Vec::new();
        let mut literal = String::new();
        let mut rest = source.as_str();
        while let Some(open) = rest.find('{') {
            literal.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            let name_len = after
                .find(|c: char| !(c.is_ascii_lowercase() || c == '_'))
                .unwrap_or(after.len());
            if name_len > 0 && after[name_len..].starts_with('}') {
                let name = &after[..name_len];
                if !KNOWN_PLACEHOLDERS.contains(&name) {
                    return Err(PromptError::UnknownPlaceholder {
                        template: id,
                        name: name.to_string(),
                    });
                }
                if !literal.is_empty() {
                    segments.push(Segment::Literal(std::mem::take(&mut literal)));
                }
                segments.push(Segment::Placeholder(name.to_string()));
                rest = &after[name_len + 1..];
            } else {
                literal.push('{');
                rest = after;
            }
        }
        literal.push_str(rest);
        if !literal.is_empty() {
            segments.push(Segment::Literal(literal));
        }
        Ok(Self { id, source, segments })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn required_placeholders(&self) -> BTreeSet<&str> {
        self.segments
            .iter()
            .filter_map(|s| match s {
                Segment::Placeholder(name) => Some(name.as_str()),
                Segment::Literal(_) => None,
            })
            .collect()
    }

    pub fn render(&self, bindings: &Bindings) -> Result<String, PromptError> {
        let mut out = String::new();
        for segment in &self.segments {
            match segment {
                Segment::Literal(text) => out.push_str(text),
                Segment::Placeholder(name) => {
                    let value = bindings
                        .get(name)
                        .ok_or_else(|| PromptError::MissingPlaceholder(name.clone()))?;
                    out.push_str(value);
                }
            }
        }
        Ok(out)
    }

    /// Copy of this template without any line that mentions one of `names`.
    /// Runs of blank lines left behind collapse into one.
    pub fn without_lines_referencing(&self, names: &[&str]) -> Self {
        if names.is_empty() {
            return self.clone();
        }
        let mut kept: Vec<&str> = Vec::new();
        for line in self.source.lines() {
            if names.iter().any(|n| line.contains(&format!("{{{n}}}"))) {
                continue;
            }
            if line.trim().is_empty() && kept.last().is_some_and(|l| l.trim().is_empty()) {
                continue;
            }
            kept.push(line);
        }
        while kept.first().is_some_and(|l| l.trim().is_empty()) {
            kept.remove(0);
        }
        Self::parse(self.id.clone(), &kept.join("\n")).expect("subset of a valid template")
    }
}

macro_rules! builtin_templates {
    ($($id:literal),* $(,)?) => {
        &[$(($id, include_str!(concat!("../../templates/", $id, ".txt")))),*]
    };
}

const BUILTIN: &[(&str, &str)] = builtin_templates!(
    "agent_id_belief",
    "agent_id_action",
    "fact_information",
    "fact_question",
    "bigtom_percept",
    "bigtom_belief_related",
    "bigtom_desire",
    "bigtom_action_related",
    "bigtom_belief_forward",
    "bigtom_action_forward",
    "bigtom_belief_backward",
    "fantom_percept",
    "fantom_belief",
    "cot",
    "one_step",
);

/// Placeholder set each template id is expected to use.
pub fn expected_placeholders(id: &str) -> Option<&'static [&'static str]> {
    const DIM_BASE: [&str; 4] = ["agent", "answer_format", "constraints", "context"];
    Some(match id {
        "agent_id_belief" | "agent_id_action" => &["question"],
        "fact_information" => &["agent", "question"],
        "fact_question" => &["information"],
        "bigtom_percept" | "bigtom_desire" | "bigtom_action_related" => &DIM_BASE,
        "bigtom_belief_related" => &["agent", "answer_format", "constraints", "context", "percept_response"],
        "bigtom_belief_forward" => {
            &["agent", "answer_format", "constraints", "context", "percept_response", "question"]
        }
        "bigtom_action_forward" => &[
            "agent", "answer_format", "belief_response", "constraints", "context", "desire_response", "question",
        ],
        "bigtom_belief_backward" => &[
            "action_response", "agent", "answer_format", "constraints", "context", "desire_response", "question",
        ],
        "fantom_percept" => &["agent", "answer_format", "constraints", "context", "fact_question"],
        "fantom_belief" => &[
            "agent", "answer_format", "constraints", "context", "fact_question", "percept_response", "question",
        ],
        "cot" => &["answer_format", "context", "question"],
        "one_step" => &["answer_format", "constraints", "context", "instructions", "question"],
        _ => return None,
    })
}

/// Outcome of checking one template against its expected placeholder set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TemplateCheck {
    pub id: String,
    pub missing: Vec<String>,
    pub unexpected: Vec<String>,
}

impl TemplateCheck {
    pub fn is_ok(&self) -> bool {
        self.missing.is_empty() && self.unexpected.is_empty()
    }
}

/// The full collection of prompt templates, keyed by id.
#[derive(Clone, Debug)]
pub struct TemplateSet {
    templates: BTreeMap<String, PromptTemplate>,
}

impl TemplateSet {
    pub fn builtin() -> Self {
        let templates = BUILTIN
            .iter()
            .map(|(id, text)| {
                let t = PromptTemplate::parse(*id, text).expect("built-in template parses");
                (id.to_string(), t)
            })
            .collect();
        Self { templates }
    }

    /// Built-in templates, with any `<id>.txt` found in `dir` taking precedence.
    pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut set = Self::builtin();
        let entries = fs::read_dir(dir).map_err(|e| PromptError::Io(format!("{}: {e}", dir.display())))?;
        for entry in entries {
            let path = entry.map_err(|e| PromptError::Io(e.to_string()))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                continue;
            }
            let Some(id) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            let text = fs::read_to_string(&path).map_err(|e| PromptError::Io(format!("{}: {e}", path.display())))?;
            set.templates.insert(id.to_string(), PromptTemplate::parse(id, &text)?);
        }
        Ok(set)
    }

    pub fn get(&self, id: &str) -> Result<&PromptTemplate, PromptError> {
        self.templates
            .get(id)
            .ok_or_else(|| PromptError::UnknownTemplate(id.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &PromptTemplate> {
        self.templates.values()
    }

    /// Compares every known template's placeholders with the expected set.
    pub fn check(&self) -> Vec<TemplateCheck> {
        BUILTIN
            .iter()
            .map(|(id, _)| {
                let expected: BTreeSet<&str> = expected_placeholders(id).unwrap_or(&[]).iter().copied().collect();
                match self.templates.get(*id) {
                    None => TemplateCheck {
                        id: id.to_string(),
                        missing: expected.iter().map(|s| s.to_string()).collect(),
                        unexpected: Vec::new(),
                    },
                    Some(t) => {
                        let actual = t.required_placeholders();
                        TemplateCheck {
                            id: id.to_string(),
                            missing: expected.difference(&actual).map(|s| s.to_string()).collect(),
                            unexpected: actual.difference(&expected).map(|s| s.to_string()).collect(),
                        }
                    }
                }
            })
            .collect()
    }
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::builtin()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bind(pairs: &[(&str, &str)]) -> Bindings {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn concatenates_segments() {
        let t = PromptTemplate::parse("t", "Q: {question}").unwrap();
        assert_eq!(t.render(&bind(&[("question", "Who?")])).unwrap(), "Q: Who?");
    }

    #[test]
    fn missing_binding() {
        let t = PromptTemplate::parse("t", "Hello {agent}").unwrap();
        assert_eq!(t.render(&Bindings::new()), Err(PromptError::MissingPlaceholder("agent".into())));
    }

    #[test]
    fn stray_braces_are_literal() {
        let t = PromptTemplate::parse("t", "{ x } {Agent} {}{agent}").unwrap();
        assert_eq!(t.required_placeholders().into_iter().collect::<Vec<_>>(), vec!["agent"]);
        assert_eq!(t.render(&bind(&[("agent", "A")])).unwrap(), "{ x } {Agent} {}A");
    }

    #[test]
    fn unknown_placeholder_rejected() {
        assert!(matches!(
            PromptTemplate::parse("t", "{mood}"),
            Err(PromptError::UnknownPlaceholder { .. })
        ));
    }

    #[test]
    fn bound_values_are_not_reinterpreted() {
        let t = PromptTemplate::parse("t", "{context}|{agent}").unwrap();
        let out = t.render(&bind(&[("context", "{agent}"), ("agent", "Hiro")])).unwrap();
        assert_eq!(out, "{agent}|Hiro");
    }

    #[test]
    fn backward_belief_template_substitutes_responses() {
        let set = TemplateSet::builtin();
        let t = set.get("bigtom_belief_backward").unwrap();
        let out = t
            .render(&bind(&[
                ("context", "CTX"),
                ("constraints", "Belief of Hiro is what Hiro believes about the state of the environment."),
                ("agent", "Hiro"),
                ("desire_response", "DESIRE-TEXT"),
                ("action_response", "ACTION-TEXT"),
                ("question", "QUESTION"),
                ("answer_format", "FORMAT"),
            ]))
            .unwrap();
        assert!(out.contains("DESIRE-TEXT") && out.contains("ACTION-TEXT"));
        assert!(out.contains("Belief of Hiro is what Hiro believes"));
    }

    #[test]
    fn line_elision() {
        let t = PromptTemplate::parse("t", "A\n\n{constraints}\n\nB {percept_response}\n\nC").unwrap();
        let e = t.without_lines_referencing(&["constraints", "percept_response"]);
        assert_eq!(e.source(), "A\n\nC");
    }

    #[test]
    fn builtins_pass_check() {
        for c in TemplateSet::builtin().check() {
            assert!(c.is_ok(), "{c:?}");
        }
    }

    #[test]
    fn load_dir_overrides_and_check_catches_drift() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("cot.txt"), "{context}\n{question}\n").unwrap();
        let set = TemplateSet::load_dir(dir.path()).unwrap();
        let bad: Vec<_> = set.check().into_iter().filter(|c| !c.is_ok()).collect();
        assert_eq!(bad.len(), 1);
        assert_eq!(bad[0].id, "cot");
        assert_eq!(bad[0].missing, vec!["answer_format".to_string()]);
    }

    proptest! {
        #[test]
        fn render_is_pure(ctx in ".{0,40}", q in ".{0,40}", fmt in ".{0,20}") {
            let set = TemplateSet::builtin();
            let t = set.get("cot").unwrap();
            let b = bind(&[("context", &ctx), ("question", &q), ("answer_format", &fmt)]);
            let a = t.render(&b).unwrap();
            prop_assert_eq!(&a, &t.render(&b).unwrap());
            prop_assert!(a.contains(&ctx) && a.contains(&q));
        }
    }
}
