use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::ChainError;
use crate::constraints::{select_constraints, ConstraintSet};
use crate::tom::{final_conditioning, queried_dimension, related_dimensions, DatasetFamily, TaskType, ToMDimension};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "step", content = "dimension", rename_all = "snake_case")]
pub enum StepKind {
    AgentIdentification,
    FactQuestionReconstruction,
    InferDimension(ToMDimension),
    FinalAnswer(ToMDimension),
}

/// Which dimensions to leave out of the chain and whether to strip constraints.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AblationConfig {
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub dropped_dimensions: BTreeSet<ToMDimension>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub drop_constraints: bool,
}

impl AblationConfig {
    pub fn complete() -> Self {
        Self::default()
    }

    pub fn without(dim: ToMDimension) -> Self {
        Self { dropped_dimensions: [dim].into_iter().collect(), drop_constraints: false }
    }

    pub fn without_constraints() -> Self {
        Self { dropped_dimensions: BTreeSet::new(), drop_constraints: true }
    }

    pub fn is_complete(&self) -> bool {
        self.dropped_dimensions.is_empty() && !self.drop_constraints
    }

    /// Row label in the style "complete method", "w/o percept", "w/o constraints".
    pub fn label(&self) -> String {
        if self.is_complete() {
            return "complete method".to_string();
        }
        let mut parts: Vec<&str> = self.dropped_dimensions.iter().map(|d| d.word()).collect();
        if self.drop_constraints {
            parts.push("constraints");
        }
        format!("w/o {}", parts.join(", "))
    }

    pub fn validate(&self, task: TaskType) -> Result<(), ChainError> {
        let related = related_dimensions(task);
        match self.dropped_dimensions.iter().find(|d| !related.contains(d)) {
            Some(d) => Err(ChainError::InvalidAblation(format!(
                "{d} is not a related dimension of the {} task",
                task.long_name()
            ))),
            None => Ok(()),
        }
    }
}

/// One step of a chain before it is run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlannedStep {
    pub kind: StepKind,
    pub template_id: Option<&'static str>,
    pub constraint_set: ConstraintSet,
    pub conditioned_on: Vec<ToMDimension>,
}

fn infer_template(family: DatasetFamily, task: TaskType, dim: ToMDimension) -> &'static str {
    use ToMDimension::*;
    match (family, task, dim) {
        (DatasetFamily::Fantom, _, _) => "fantom_percept",
        (_, _, Percept) => "bigtom_percept",
        (_, _, Belief) => "bigtom_belief_related",
        (_, _, Desire) => "bigtom_desire",
        (_, _, Action) => "bigtom_action_related",
    }
}

fn final_template(family: DatasetFamily, task: TaskType) -> &'static str {
    match (family, task) {
        (DatasetFamily::Fantom, _) => "fantom_belief",
        (_, TaskType::ForwardBelief) => "bigtom_belief_forward",
        (_, TaskType::ForwardAction) => "bigtom_action_forward",
        (_, TaskType::BackwardBelief) => "bigtom_belief_backward",
    }
}

/// Conditioning of an intermediate inference, before ablation.
fn intermediate_conditioning(task: TaskType, dim: ToMDimension) -> Vec<ToMDimension> {
    match (task, dim) {
        (TaskType::ForwardAction, ToMDimension::Belief) => vec![ToMDimension::Percept],
        _ => Vec::new(),
    }
}

/// The ordered steps CCoToM takes for one example.
pub fn plan(task: TaskType, family: DatasetFamily, ablation: &AblationConfig) -> Result<Vec<PlannedStep>, ChainError> {
    if family == DatasetFamily::Fantom && task != TaskType::ForwardBelief {
        return Err(ChainError::UnsupportedTask { family, task });
    }
    ablation.validate(task)?;
    let dropped = &ablation.dropped_dimensions;
    let keep = |dims: Vec<ToMDimension>| dims.into_iter().filter(|d| !dropped.contains(d)).collect::<Vec<_>>();
    let constraints = |dim| -> Result<ConstraintSet, ChainError> {
        if ablation.drop_constraints {
            Ok(ConstraintSet::empty())
        } else {
            Ok(select_constraints(family, task, dim)?)
        }
    };

    let mut steps = vec![PlannedStep {
        kind: StepKind::AgentIdentification,
        template_id: None,
        constraint_set: ConstraintSet::empty(),
        conditioned_on: Vec::new(),
    }];
    if family == DatasetFamily::Fantom {
        steps.push(PlannedStep {
            kind: StepKind::FactQuestionReconstruction,
            template_id: None,
            constraint_set: ConstraintSet::empty(),
            conditioned_on: Vec::new(),
        });
    }
    for dim in keep(related_dimensions(task)) {
        steps.push(PlannedStep {
            kind: StepKind::InferDimension(dim),
            template_id: Some(infer_template(family, task, dim)),
            constraint_set: constraints(dim)?,
            conditioned_on: keep(intermediate_conditioning(task, dim)),
        });
    }
    let queried = queried_dimension(task);
    steps.push(PlannedStep {
        kind: StepKind::FinalAnswer(queried),
        template_id: Some(final_template(family, task)),
        constraint_set: constraints(queried)?,
        conditioned_on: keep(final_conditioning(task)),
    });
    Ok(steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::ids;
    use proptest::prelude::*;
    use ToMDimension::*;

    fn kinds(steps: &[PlannedStep]) -> Vec<StepKind> {
        steps.iter().map(|s| s.kind).collect()
    }

    #[test]
    fn forward_action_has_five_steps() {
        let steps = plan(TaskType::ForwardAction, DatasetFamily::BigToM, &AblationConfig::complete()).unwrap();
        assert_eq!(
            kinds(&steps),
            vec![
                StepKind::AgentIdentification,
                StepKind::InferDimension(Percept),
                StepKind::InferDimension(Belief),
                StepKind::InferDimension(Desire),
                StepKind::FinalAnswer(Action),
            ]
        );
        assert_eq!(steps[2].conditioned_on, vec![Percept]);
        assert_eq!(steps[4].conditioned_on, vec![Belief, Desire]);
        assert_eq!(steps[4].constraint_set.ids(), &[ids::BIGTOM_DEF_ACTION_FUTURE, ids::BIGTOM_DEP_ACTION]);
    }

    #[test]
    fn forward_belief_without_percept_keeps_constraints() {
        let steps = plan(TaskType::ForwardBelief, DatasetFamily::BigToM, &AblationConfig::without(Percept)).unwrap();
        assert_eq!(kinds(&steps), vec![StepKind::AgentIdentification, StepKind::FinalAnswer(Belief)]);
        assert!(steps[1].conditioned_on.is_empty());
        assert_eq!(steps[1].constraint_set.ids(), &[ids::BIGTOM_DEF_BELIEF, ids::BIGTOM_DEP_BELIEF]);
    }

    #[test]
    fn backward_belief_without_action_conditions_on_desire() {
        let steps = plan(TaskType::BackwardBelief, DatasetFamily::BigToM, &AblationConfig::without(Action)).unwrap();
        assert_eq!(steps.last().unwrap().conditioned_on, vec![Desire]);
        assert_eq!(steps.len(), 3);
    }

    #[test]
    fn fantom_plan() {
        let steps = plan(TaskType::ForwardBelief, DatasetFamily::Fantom, &AblationConfig::complete()).unwrap();
        assert_eq!(
            kinds(&steps),
            vec![
                StepKind::AgentIdentification,
                StepKind::FactQuestionReconstruction,
                StepKind::InferDimension(Percept),
                StepKind::FinalAnswer(Belief),
            ]
        );
        assert_eq!(steps[3].constraint_set.ids(), &[ids::FANTOM_DEP_BELIEF]);
    }

    #[test]
    fn no_constraints_empties_every_set() {
        for task in TaskType::ALL {
            let full = plan(task, DatasetFamily::BigToM, &AblationConfig::complete()).unwrap();
            let bare = plan(task, DatasetFamily::BigToM, &AblationConfig::without_constraints()).unwrap();
            assert_eq!(full.len(), bare.len());
            assert!(bare.iter().all(|s| s.constraint_set.is_empty()));
        }
    }

    #[test]
    fn invalid_ablation() {
        assert!(matches!(
            plan(TaskType::ForwardBelief, DatasetFamily::BigToM, &AblationConfig::without(Desire)),
            Err(ChainError::InvalidAblation(_))
        ));
        assert!(matches!(
            plan(TaskType::ForwardAction, DatasetFamily::Fantom, &AblationConfig::complete()),
            Err(ChainError::UnsupportedTask { .. })
        ));
    }

    #[test]
    fn labels() {
        assert_eq!(AblationConfig::complete().label(), "complete method");
        assert_eq!(AblationConfig::without(Percept).label(), "w/o percept");
        assert_eq!(AblationConfig::without_constraints().label(), "w/o constraints");
    }

    fn valid_ablations(task: TaskType) -> Vec<AblationConfig> {
        let related = related_dimensions(task);
        let mut out = Vec::new();
        for mask in 0..(1u32 << related.len()) {
            for drop_constraints in [false, true] {
                let dropped = related
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask & (1 << i) != 0)
                    .map(|(_, d)| *d)
                    .collect();
                out.push(AblationConfig { dropped_dimensions: dropped, drop_constraints });
            }
        }
        out
    }

    #[test]
    fn step_count_and_conditioning_laws() {
        for family in [DatasetFamily::BigToM, DatasetFamily::Fantom] {
            for task in TaskType::ALL {
                if family == DatasetFamily::Fantom && task != TaskType::ForwardBelief {
                    continue;
                }
                for ablation in valid_ablations(task) {
                    let steps = plan(task, family, &ablation).unwrap();
                    let extra = usize::from(family == DatasetFamily::Fantom);
                    assert_eq!(
                        steps.len(),
                        2 + extra + related_dimensions(task).len() - ablation.dropped_dimensions.len()
                    );
                    let expected: Vec<_> = final_conditioning(task)
                        .into_iter()
                        .filter(|d| !ablation.dropped_dimensions.contains(d))
                        .collect();
                    assert_eq!(steps.last().unwrap().conditioned_on, expected);
                    // Conditioning only refers to dimensions inferred earlier.
                    let mut inferred = Vec::new();
                    for s in &steps {
                        assert!(s.conditioned_on.iter().all(|d| inferred.contains(d)));
                        if let StepKind::InferDimension(d) = s.kind {
                            inferred.push(d);
                        }
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn every_planned_step_has_a_selection_row(t in 0usize..3, mask in 0u32..8) {
            let task = TaskType::ALL[t];
            let related = related_dimensions(task);
            let dropped = related.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, d)| *d).collect();
            let ablation = AblationConfig { dropped_dimensions: dropped, drop_constraints: false };
            let steps = plan(task, DatasetFamily::BigToM, &ablation).unwrap();
            for s in steps {
                if let StepKind::InferDimension(d) | StepKind::FinalAnswer(d) = s.kind {
                    prop_assert!(select_constraints(DatasetFamily::BigToM, task, d).is_ok());
                }
            }
        }
    }
}
