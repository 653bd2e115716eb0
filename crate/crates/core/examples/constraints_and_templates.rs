//! Inspects the building blocks: the causal graph, which constraints each
//! chain step receives, how they render for an agent, and the prompt
//! template set. Writes the constraint table to stdout in TSV form so it can
//! be edited and passed back with `--constraints-table`.
//!
//! ```text
//! cargo run -p ccotom --example constraints_and_templates
//! ```

use ccotom::chain::{plan, AblationConfig};
use ccotom::constraints::ConstraintRegistry;
use ccotom::prompting::TemplateSet;
use ccotom::tom::{final_conditioning, related_dimensions, CausalGraph, DatasetFamily, TaskType};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for (from, to) in CausalGraph.edges() {
        println!("{} -> {}", from.word(), to.word());
    }

    let registry = ConstraintRegistry::builtin();
    for (family, task) in [
        (DatasetFamily::BigToM, TaskType::ForwardBelief),
        (DatasetFamily::BigToM, TaskType::ForwardAction),
        (DatasetFamily::BigToM, TaskType::BackwardBelief),
        (DatasetFamily::Fantom, TaskType::ForwardBelief),
    ] {
        let words = |dims: Vec<_>| dims.iter().map(|d: &ccotom::tom::ToMDimension| d.word()).collect::<Vec<_>>().join(", ");
        println!(
            "\n{} {}: related [{}], final answer sees [{}]",
            family.name(),
            task.long_name(),
            words(related_dimensions(task)),
            words(final_conditioning(task)),
        );
        for step in plan(task, family, &AblationConfig::complete())? {
            println!("  {:?} <- {:?}", step.kind, step.constraint_set.ids());
            if !step.constraint_set.is_empty() {
                for line in registry.render(&step.constraint_set, "Noor")?.lines() {
                    println!("      {line}");
                }
            }
        }
    }

    println!("\ntemplates:");
    for check in TemplateSet::builtin().check() {
        println!("  {:<26} ok={}", check.id, check.is_ok());
    }

    println!("\nconstraint table:");
    registry.export_table(std::io::stdout())?;
    Ok(())
}
