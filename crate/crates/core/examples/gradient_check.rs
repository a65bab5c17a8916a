// Usage: cargo run --release --example gradient_check
//
// Backprop against central differences. The relative error is worst on
// parameters whose gradient is close to zero (behind saturated ELU units),
// where the difference quotient is mostly roundoff.

use dsame::surrogate::{finite_difference_check, initialize_model, LabeledSample, ModelKind};

fn main() -> dsame::Result<()> {
    let mut x = vec![0.0; 40];
    for i in (0..40).step_by(3) {
        x[i] = if i % 2 == 0 { 2.0 } else { 1.0 };
    }
    let sample = LabeledSample { x, f: 0.7, m: [-0.3, 1.2], alpha: None };
    for seed in 0..5 {
        let model = initialize_model(ModelKind::Mlp, 40, 3, seed)?;
        let (loss, grads) = model.loss_and_gradients(&[&sample])?;
        let norm = grads.flatten().iter().map(|g| g * g).sum::<f64>().sqrt();
        println!(
            "seed {seed}: loss {loss:.4}  |grad| {norm:.4}  max relative error {:.2e}",
            finite_difference_check(&model, &sample, 1e-5)?
        );
    }
    Ok(())
}
