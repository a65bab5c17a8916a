// Usage: cargo run --release --example surrogate_training
//
// Fits MLP and linear surrogates on simulator data and compares held-out error.

use dsame::deck::encode_bag_of_cards;
use dsame::qd::Evaluator;
use dsame::rng::stream;
use dsame::settings::Settings;
use dsame::surrogate::{initialize_model, DataBuffer, LabeledSample, ModelKind, TrainConfig};

fn main() -> dsame::Result<()> {
    let settings = Settings::default();
    let problem = settings.problem()?;
    let evaluator = settings.evaluator(&problem)?;

    let mut rng = stream(8);
    let mut label = |n: usize, offset: u64| -> dsame::Result<Vec<LabeledSample>> {
        (0..n)
            .map(|i| {
                let deck = problem.decks.random_deck(&mut rng);
                let r = evaluator.evaluate(&deck, offset + i as u64)?;
                Ok(LabeledSample { x: encode_bag_of_cards(&deck), f: r.f, m: r.m, alpha: r.alpha })
            })
            .collect()
    };
    let mut train = DataBuffer::new();
    for s in label(2_000, 0)? {
        train.push(s);
    }
    let held_out = label(300, 1_000_000)?;

    for kind in [ModelKind::Linear, ModelKind::Mlp] {
        let mut model = initialize_model(kind, 40, 3, 5)?;
        let losses = model.train(&train, &TrainConfig { epochs: 40, ..TrainConfig::default() })?;
        let f_mse = held_out
            .iter()
            .map(|s| model.predict(&s.x).map(|p| (p.f_hat - s.f).powi(2)))
            .sum::<dsame::Result<f64>>()?
            / held_out.len() as f64;
        println!(
            "{kind:?}: {} parameters, train loss {:.3} -> {:.3}, held-out objective MSE {:.2}, measure MSE {:.4}",
            model.param_count(),
            losses[0],
            losses[losses.len() - 1],
            f_mse,
            model.measure_mse(&held_out)?
        );
    }
    Ok(())
}
