// Usage: cargo run --release --example quickstart
//
// One online DSA-ME run against plain MAP-Elites, same seed and budget.

use dsame::dsa_me::dsa_me_run;
use dsame::experiment::Variant;
use dsame::settings::Settings;

fn main() -> dsame::Result<()> {
    let mut settings = Settings::default();
    settings.dsa_me.evaluations = 400;

    let problem = settings.problem()?;
    let evaluator = settings.evaluator(&problem)?;

    for variant in [Variant::MapElites, Variant::DsaMe] {
        let config = variant.configure(&settings.run_config(42));
        let run = dsa_me_run(&config, &problem, &evaluator, None)?;
        let archive = &run.ground_truth_archive;
        let best = archive.best_elite()?;
        println!(
            "{variant:<10} evaluations {:>4}  coverage {:.3}  qd {:>8.1}  best f {:+.2} at turns {:.2}, hand {:.2}",
            run.evaluations_used,
            archive.coverage(),
            archive.qd_score(settings.archive.objective_floor),
            best.objective,
            best.measures[0],
            best.measures[1],
        );
    }
    Ok(())
}
