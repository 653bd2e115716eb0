//! Constraint registry and per-step constraint selection.
//!
//! Definitional constraints pin down what a concept means; dependency
//! constraints state which dimensions determine another. Every template
//! carries zero or more literal `{agent}` placeholders that are filled with
//! the identified agent's name at render time.

use std::collections::HashSet;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tom::{DatasetFamily, TaskType, ToMDimension};

pub const AGENT_PLACEHOLDER: &str = "{agent}";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    Definitional,
    Dependency,
}

/// What a constraint talks about.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintSubject {
    Percept,
    Belief,
    Desire,
    Action,
    CausalEvent,
}

impl From<ToMDimension> for ConstraintSubject {
    fn from(d: ToMDimension) -> Self {
        match d {
            ToMDimension::Percept => Self::Percept,
            ToMDimension::Belief => Self::Belief,
            ToMDimension::Desire => Self::Desire,
            ToMDimension::Action => Self::Action,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub id: String,
    pub kind: ConstraintKind,
    pub family: DatasetFamily,
    pub subject: ConstraintSubject,
    pub template: String,
}

impl ConstraintSpec {
    pub fn render(&self, agent: &str) -> String {
        self.template.replace(AGENT_PLACEHOLDER, agent)
    }
}

/// Stable identifiers of the built-in constraints.
pub mod ids {
    pub const BIGTOM_DEF_BELIEF: &str = "bigtom.def.belief";
    pub const BIGTOM_DEF_PERCEPT: &str = "bigtom.def.percept";
    pub const BIGTOM_DEF_CAUSAL_EVENT: &str = "bigtom.def.causal_event";
    pub const BIGTOM_DEF_ACTION_PAST: &str = "bigtom.def.action_past";
    pub const BIGTOM_DEF_ACTION_FUTURE: &str = "bigtom.def.action_future";
    pub const BIGTOM_DEF_DESIRE: &str = "bigtom.def.desire";
    pub const BIGTOM_DEP_BELIEF: &str = "bigtom.dep.belief";
    pub const BIGTOM_DEP_ACTION: &str = "bigtom.dep.action";
    pub const FANTOM_DEF_PERCEPT: &str = "fantom.def.percept";
    pub const FANTOM_DEP_PERCEPT: &str = "fantom.dep.percept";
    pub const FANTOM_DEP_BELIEF: &str = "fantom.dep.belief";
}

fn builtin_specs() -> Vec<ConstraintSpec> {
    use ConstraintKind::*;
    use ConstraintSubject as S;
    use DatasetFamily::*;
    let row = |id: &str, kind, family, subject, template: &str| ConstraintSpec {
        id: id.to_string(),
        kind,
        family,
        subject,
        template: template.to_string(),
    };
    vec![
        row(ids::BIGTOM_DEF_BELIEF, Definitional, BigToM, S::Belief,
            "Belief of {agent} is what {agent} believes about the state of the environment."),
        row(ids::BIGTOM_DEF_PERCEPT, Definitional, BigToM, S::Percept,
            "Percept of {agent} is whether or not {agent} perceives the causal event."),
        row(ids::BIGTOM_DEF_CAUSAL_EVENT, Definitional, BigToM, S::CausalEvent,
            "Causal event is the event that changes the state of the environment."),
        row(ids::BIGTOM_DEF_ACTION_PAST, Definitional, BigToM, S::Action,
            "Action of {agent} is what {agent} does after the causal event."),
        row(ids::BIGTOM_DEF_ACTION_FUTURE, Definitional, BigToM, S::Action,
            "Action of {agent} is what {agent} will do after the causal event."),
        row(ids::BIGTOM_DEF_DESIRE, Definitional, BigToM, S::Desire,
            "Desire of {agent} is what {agent} wants."),
        row(ids::BIGTOM_DEP_BELIEF, Dependency, BigToM, S::Belief,
            "Belief of {agent} is determined by the percept of {agent}."),
        row(ids::BIGTOM_DEP_ACTION, Dependency, BigToM, S::Action,
            "Action of {agent} is determined by the belief of {agent} and the desire of {agent}."),
        row(ids::FANTOM_DEF_PERCEPT, Definitional, Fantom, S::Percept,
            "The percept of {agent} about the fact question is whether or not {agent} perceives the information about the fact question."),
        row(ids::FANTOM_DEP_PERCEPT, Dependency, Fantom, S::Percept,
            "If {agent} is absent from the conversation where the information about the fact question is shared, {agent} does not perceive the information about the fact question. If {agent} is not absent from the conversation where the information about the fact question is shared, {agent} perceives the information about the fact question."),
        row(ids::FANTOM_DEP_BELIEF, Dependency, Fantom, S::Belief,
            "What {agent} believes about the fact question is determined by the percept of {agent} about the fact question."),
    ]
}

/// Ordered list of constraint ids, rendered in this order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConstraintSet {
    entries: Vec<String>,
}

impl ConstraintSet {
    pub fn new<I, S>(ids: I) -> Result<Self, ConstraintError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut set = Self::default();
        for id in ids {
            let id = id.into();
            if set.entries.contains(&id) {
                return Err(ConstraintError::DuplicateId(id));
            }
            set.entries.push(id);
        }
        Ok(set)
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn ids(&self) -> &[String] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Appends ids not already present, keeping first-seen order.
    pub fn extend_dedup(&mut self, other: &ConstraintSet) {
        for id in &other.entries {
            if !self.entries.contains(id) {
                self.entries.push(id.clone());
            }
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConstraintError {
    #[error("unknown constraint id `{0}`")]
    UnknownConstraintId(String),
    #[error("duplicate constraint id `{0}`")]
    DuplicateId(String),
    #[error("step inferring {infer} is not part of the {family} {task} chain")]
    StepNotInChain {
        family: DatasetFamily,
        task: TaskType,
        infer: ToMDimension,
    },
    #[error("agent name is empty")]
    EmptyAgent,
    #[error("constraint table: {0}")]
    Table(String),
}

/// All constraints available to the chain executor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConstraintRegistry {
    specs: Vec<ConstraintSpec>,
}

impl Default for ConstraintRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TableRow {
    id: String,
    kind: ConstraintKind,
    family: DatasetFamily,
    subject: ConstraintSubject,
    template: String,
}

impl ConstraintRegistry {
    pub fn builtin() -> Self {
        Self { specs: builtin_specs() }
    }

    pub fn specs(&self) -> &[ConstraintSpec] {
        &self.specs
    }

    pub fn lookup(&self, id: &str) -> Result<&ConstraintSpec, ConstraintError> {
        self.specs
            .iter()
            .find(|s| s.id == id)
            .ok_or_else(|| ConstraintError::UnknownConstraintId(id.to_string()))
    }

    /// Substitutes the agent into every template of `set`, one line per constraint.
    pub fn render(&self, set: &ConstraintSet, agent: &str) -> Result<String, ConstraintError> {
        if agent.trim().is_empty() {
            return Err(ConstraintError::EmptyAgent);
        }
        let lines = set
            .ids()
            .iter()
            .map(|id| self.lookup(id).map(|s| s.render(agent)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(lines.join("\n"))
    }

    /// Writes the registry as a tab-separated table with a header row.
    pub fn export_table<W: Write>(&self, writer: W) -> Result<(), ConstraintError> {
        let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_writer(writer);
        for s in &self.specs {
            w.serialize(TableRow {
                id: s.id.clone(),
                kind: s.kind,
                family: s.family,
                subject: s.subject,
                template: s.template.clone(),
            })
            .map_err(|e| ConstraintError::Table(e.to_string()))?;
        }
        w.flush().map_err(|e| ConstraintError::Table(e.to_string()))
    }

    /// Reads a table produced by [`export_table`](Self::export_table).
    ///
    /// Rows replace the built-in entry with the same id; every built-in id the
    /// selection table relies on must still resolve afterwards.
    pub fn import_table<R: Read>(reader: R) -> Result<Self, ConstraintError> {
        let mut r = csv::ReaderBuilder::new()
            .delimiter(b'\t')
            .quoting(true)
            .from_reader(reader);
        let mut registry = Self::builtin();
        let mut seen = HashSet::new();
        for row in r.deserialize::<TableRow>() {
            let row = row.map_err(|e| ConstraintError::Table(e.to_string()))?;
            if !seen.insert(row.id.clone()) {
                return Err(ConstraintError::DuplicateId(row.id));
            }
            let spec = ConstraintSpec {
                id: row.id,
                kind: row.kind,
                family: row.family,
                subject: row.subject,
                template: row.template,
            };
            match registry.specs.iter_mut().find(|s| s.id == spec.id) {
                Some(existing) => *existing = spec,
                None => registry.specs.push(spec),
            }
        }
        Ok(registry)
    }
}

/// Picks the constraints imposed on the prompt that infers `infer` within the
/// `task` chain of `family`.
pub fn select_constraints(
    family: DatasetFamily,
    task: TaskType,
    infer: ToMDimension,
) -> Result<ConstraintSet, ConstraintError> {
    use ids::*;
    use TaskType::*;
    use ToMDimension::*;
    let chosen: &[&str] = match (family, task, infer) {
        (DatasetFamily::BigToM, ForwardBelief | ForwardAction, Percept) => {
            &[BIGTOM_DEF_PERCEPT, BIGTOM_DEF_CAUSAL_EVENT]
        }
        (DatasetFamily::BigToM, ForwardBelief | ForwardAction, Belief) => {
            &[BIGTOM_DEF_BELIEF, BIGTOM_DEP_BELIEF]
        }
        (DatasetFamily::BigToM, ForwardAction | BackwardBelief, Desire) => &[BIGTOM_DEF_DESIRE],
        (DatasetFamily::BigToM, BackwardBelief, Action) => {
            &[BIGTOM_DEF_ACTION_PAST, BIGTOM_DEF_CAUSAL_EVENT]
        }
        (DatasetFamily::BigToM, ForwardAction, Action) => {
            &[BIGTOM_DEF_ACTION_FUTURE, BIGTOM_DEP_ACTION]
        }
        (DatasetFamily::BigToM, BackwardBelief, Belief) => &[BIGTOM_DEF_BELIEF, BIGTOM_DEP_ACTION],
        (DatasetFamily::Fantom, ForwardBelief, Percept) => &[FANTOM_DEF_PERCEPT, FANTOM_DEP_PERCEPT],
        (DatasetFamily::Fantom, ForwardBelief, Belief) => &[FANTOM_DEP_BELIEF],
        _ => return Err(ConstraintError::StepNotInChain { family, task, infer }),
    };
    ConstraintSet::new(chosen.iter().copied())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn registry_has_eight_bigtom_and_three_fantom() {
        let reg = ConstraintRegistry::builtin();
        let count = |f| reg.specs().iter().filter(|s| s.family == f).count();
        assert_eq!(count(DatasetFamily::BigToM), 8);
        assert_eq!(count(DatasetFamily::Fantom), 3);
    }

    #[test]
    fn verbatim_rows() {
        let reg = ConstraintRegistry::builtin();
        assert_eq!(
            reg.lookup(ids::BIGTOM_DEF_BELIEF).unwrap().template,
            "Belief of {agent} is what {agent} believes about the state of the environment."
        );
        assert_eq!(
            reg.lookup(ids::BIGTOM_DEP_ACTION).unwrap().template,
            "Action of {agent} is determined by the belief of {agent} and the desire of {agent}."
        );
        assert_eq!(
            reg.lookup(ids::FANTOM_DEP_BELIEF).unwrap().template,
            "What {agent} believes about the fact question is determined by the percept of {agent} about the fact question."
        );
    }

    #[test]
    fn dependency_rows_mention_another_dimension() {
        for s in ConstraintRegistry::builtin().specs() {
            if s.kind == ConstraintKind::Dependency {
                let lower = s.template.to_lowercase();
                let others = ["percept", "belief", "desire", "action", "absent"]
                    .iter()
                    .filter(|w| lower.contains(*w))
                    .count();
                assert!(others >= 1, "{}", s.id);
            }
        }
    }

    #[test]
    fn backward_belief_selection() {
        let set = select_constraints(DatasetFamily::BigToM, TaskType::BackwardBelief, ToMDimension::Belief).unwrap();
        assert_eq!(set.ids(), &[ids::BIGTOM_DEF_BELIEF, ids::BIGTOM_DEP_ACTION]);
    }

    #[test]
    fn forward_percept_selection() {
        let set = select_constraints(DatasetFamily::BigToM, TaskType::ForwardBelief, ToMDimension::Percept).unwrap();
        assert_eq!(set.ids(), &[ids::BIGTOM_DEF_PERCEPT, ids::BIGTOM_DEF_CAUSAL_EVENT]);
    }

    #[test]
    fn fantom_belief_selection_is_single() {
        let set = select_constraints(DatasetFamily::Fantom, TaskType::ForwardBelief, ToMDimension::Belief).unwrap();
        assert_eq!(set.ids(), &[ids::FANTOM_DEP_BELIEF]);
    }

    #[test]
    fn step_not_in_chain() {
        assert!(matches!(
            select_constraints(DatasetFamily::BigToM, TaskType::ForwardBelief, ToMDimension::Desire),
            Err(ConstraintError::StepNotInChain { .. })
        ));
        assert!(matches!(
            select_constraints(DatasetFamily::Fantom, TaskType::ForwardAction, ToMDimension::Percept),
            Err(ConstraintError::StepNotInChain { .. })
        ));
    }

    #[test]
    fn every_constraint_is_selected_somewhere() {
        let mut used = HashSet::new();
        for family in [DatasetFamily::BigToM, DatasetFamily::Fantom] {
            for task in TaskType::ALL {
                for dim in ToMDimension::ALL {
                    if let Ok(set) = select_constraints(family, task, dim) {
                        used.extend(set.ids().iter().cloned());
                    }
                }
            }
        }
        assert_eq!(used.len(), ConstraintRegistry::builtin().specs().len());
    }

    #[test]
    fn render_desire_for_luka() {
        let reg = ConstraintRegistry::builtin();
        let set = ConstraintSet::new([ids::BIGTOM_DEF_DESIRE]).unwrap();
        assert_eq!(reg.render(&set, "Luka").unwrap(), "Desire of Luka is what Luka wants.");
    }

    #[test]
    fn render_two_lines() {
        let reg = ConstraintRegistry::builtin();
        let set = ConstraintSet::new([ids::BIGTOM_DEF_BELIEF, ids::BIGTOM_DEP_ACTION]).unwrap();
        let text = reg.render(&set, "Hiro").unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines.iter().all(|l| l.contains("Hiro") && !l.contains("{agent}")));
    }

    #[test]
    fn render_empty_set() {
        let reg = ConstraintRegistry::builtin();
        assert_eq!(reg.render(&ConstraintSet::empty(), "X").unwrap(), "");
    }

    #[test]
    fn render_unknown_id() {
        let reg = ConstraintRegistry::builtin();
        let set = ConstraintSet::new(["nope"]).unwrap();
        assert_eq!(reg.render(&set, "X"), Err(ConstraintError::UnknownConstraintId("nope".into())));
    }

    #[test]
    fn duplicate_ids_rejected() {
        assert_eq!(
            ConstraintSet::new(["a", "a"]),
            Err(ConstraintError::DuplicateId("a".into()))
        );
    }

    #[test]
    fn table_round_trip() {
        let reg = ConstraintRegistry::builtin();
        let mut buf = Vec::new();
        reg.export_table(&mut buf).unwrap();
        let back = ConstraintRegistry::import_table(buf.as_slice()).unwrap();
        assert_eq!(back, reg);
    }

    #[test]
    fn table_override_replaces_template() {
        let table = "id\tkind\tfamily\tsubject\ttemplate\n\
                     bigtom.def.desire\tdefinitional\tbigtom\tdesire\tDesire of {agent} is the goal of {agent}.\n";
        let reg = ConstraintRegistry::import_table(table.as_bytes()).unwrap();
        assert_eq!(reg.lookup(ids::BIGTOM_DEF_DESIRE).unwrap().template, "Desire of {agent} is the goal of {agent}.");
        assert_eq!(reg.specs().len(), 11);
    }

    proptest! {
        #[test]
        fn substitution_is_total(agent in "[A-Za-z][A-Za-z '.-]{0,20}") {
            let reg = ConstraintRegistry::builtin();
            for spec in reg.specs() {
                let rendered = spec.render(&agent);
                prop_assert!(!rendered.contains(AGENT_PLACEHOLDER));
            }
        }

        #[test]
        fn selection_is_deterministic(f in 0usize..2, t in 0usize..3, d in 0usize..4) {
            let family = [DatasetFamily::BigToM, DatasetFamily::Fantom][f];
            let a = select_constraints(family, TaskType::ALL[t], ToMDimension::ALL[d]);
            let b = select_constraints(family, TaskType::ALL[t], ToMDimension::ALL[d]);
            prop_assert_eq!(a, b);
        }
    }
}
