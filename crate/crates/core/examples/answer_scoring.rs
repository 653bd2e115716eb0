//! Scoring primitives on their own: option extraction, token F1 and the
//! embedding-distance rule, using a toy bag-of-words embedder.
//!
//! ```text
//! cargo run -p ccotom --example answer_scoring
//! ```

use ccotom::eval::{self, Embedder, EvalError};
use ccotom::prompting::parse_final_answer;
use ccotom::tom::Question;

/// Counts a handful of content words. Good enough to show how the
/// nearest-reference rule behaves.
struct BagOfWords(&'static [&'static str]);

impl Embedder for BagOfWords {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EvalError> {
        Ok(texts
            .iter()
            .map(|t| {
                let toks = eval::normalize_tokens(t);
                self.0.iter().map(|w| toks.iter().filter(|x| x == w).count() as f64).collect()
            })
            .collect())
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let q = Question::multiple_choice(
        "Where does Ana think the keys are?",
        vec!["In the drawer.".into(), "On the table.".into()],
    )?;
    for raw in ["Answer: (b)", "I think (a) In the drawer.", "On the table.", "no idea"] {
        // Unparseable responses count as wrong when scored.
        match parse_final_answer(raw, &q) {
            Ok(parsed) => println!("{raw:<28} -> {:?} {:?}", parsed.kind, parsed.option_index),
            Err(e) => println!("{raw:<28} -> {e}"),
        }
    }

    println!();
    for (pred, gold) in [("the red car", "a red car"), ("lisbon in may", "Lisbon"), ("", "x")] {
        println!("F1({pred:?}, {gold:?}) = {:.3}", eval::token_f1(pred, gold));
    }

    println!();
    let embedder = BagOfWords(&["lisbon", "porto", "madrid", "trip", "work"]);
    let gold = "Mira took a trip to Lisbon";
    let wrong = vec!["Mira went to Porto for work".to_string()];
    for pred in ["Lisbon, on a trip", "Porto", "Madrid"] {
        let out = eval::score_dist(pred, gold, &wrong, &embedder, eval::DEFAULT_TAU)?;
        println!(
            "{pred:<18} gold {:.3} wrong {:?} correct={}",
            out.gold_distance, out.wrong_distances, out.correct
        );
    }
    // Without wrong references the threshold decides.
    let out = eval::score_dist("Madrid", gold, &[], &embedder, eval::DEFAULT_TAU)?;
    println!("{:<18} gold {:.3} (tau {}) correct={}", "Madrid", out.gold_distance, eval::DEFAULT_TAU, out.correct);
    Ok(())
}
