// Usage: cargo run --release --example custom_evaluator
//
// The search does not depend on MiniCard: any `Evaluator` works. Here decks
// are scored by a made-up synergy rule.

use dsame::archive::{MeasureDim, MeasureSpace};
use dsame::deck::{generate_cardset, DeckConstraints, DeckGenome, DeckSpace};
use dsame::dsa_me::{dsa_me_run, DsaMeConfig, Problem, SurrogateKind};
use dsame::qd::{EvaluationResult, Evaluator};

struct Synergy;

impl Evaluator for Synergy {
    fn evaluate(&self, deck: &DeckGenome, _seed: u64) -> dsame::Result<EvaluationResult> {
        let c = deck.counts();
        let pairs = c.windows(2).filter(|w| w[0] > 0 && w[1] > 0).count() as f64;
        let low: u32 = c[..c.len() / 2].iter().sum();
        let doubles = c.iter().filter(|&&n| n == 2).count() as f64;
        Ok(EvaluationResult { f: pairs - 0.5 * doubles, m: [f64::from(low) / 30.0, doubles / 15.0], alpha: None })
    }

    fn has_ancillary(&self) -> bool {
        false
    }
}

fn main() -> dsame::Result<()> {
    let unit = MeasureDim { lower: 0.0, upper: 1.0, resolution: 10 };
    let problem = Problem {
        decks: DeckSpace::new(generate_cardset(0, 30)?, DeckConstraints::default(), 0.5)?,
        measures: MeasureSpace::new([unit, unit])?,
    };
    for surrogate in [SurrogateKind::None, SurrogateKind::Mlp] {
        let config = DsaMeConfig { evaluations: 300, inner_iterations: 3_000, surrogate, seed: 4, ..DsaMeConfig::default() };
        let run = dsa_me_run(&config, &problem, &Synergy, None)?;
        let a = &run.ground_truth_archive;
        println!("{surrogate:?}: coverage {:.2}, best {:.1}", a.coverage(), a.max_objective()?);
    }
    Ok(())
}
