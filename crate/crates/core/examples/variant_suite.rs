// Usage: cargo run --release --example variant_suite [out_dir]
//
// A reduced multi-trial comparison. Writes run directories plus summary.csv,
// ccdf.csv and paired.csv.

use dsame::experiment::{run_suite, Variant};
use dsame::settings::Settings;

fn main() -> dsame::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "target/variant_suite".into());
    let mut settings = Settings::default();
    settings.dsa_me.evaluations = 300;
    settings.dsa_me.inner_iterations = 5_000;
    settings.surrogate.offline_pretrain_count = 1_000;
    settings.experiment.trials = 3;
    settings.experiment.variants =
        vec![Variant::MapElites, Variant::OfflineDsaMe, Variant::LsaMe, Variant::DsaMe, Variant::DsaMeNoReset];

    let problem = settings.problem()?;
    let evaluator = settings.evaluator(&problem)?;
    let outcome = run_suite(&settings, &evaluator, std::path::Path::new(&out))?;

    for v in &settings.experiment.variants {
        let qd = outcome.row(*v, "qd_score_floored").unwrap();
        let cov = outcome.row(*v, "coverage").unwrap();
        println!("{v:<16} qd {:>8.1} ± {:<6.1} coverage {:.3} ± {:.3}", qd.mean, qd.stderr, cov.mean, cov.stderr);
    }
    println!("wrote {out}");
    Ok(())
}
