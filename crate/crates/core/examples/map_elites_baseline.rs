// Usage: cargo run --release --example map_elites_baseline
//
// MAP-Elites straight on the simulator, logging metrics every 500 evaluations.

use dsame::archive::Archive;
use dsame::qd::{map_elites_run_with, MapElitesConfig};
use dsame::settings::Settings;

fn main() -> dsame::Result<()> {
    let settings = Settings::default();
    let problem = settings.problem()?;
    let evaluator = settings.evaluator(&problem)?;

    let mut archive = Archive::new(problem.measures);
    let config = MapElitesConfig {
        iterations: 5_000,
        initial_population: 100,
        batch_size: 10,
        seed: 1,
        metrics_stride: 500,
        qd_floor: settings.archive.objective_floor,
    };
    let mut wins = 0;
    let log = map_elites_run_with(&evaluator, &mut archive, &problem.decks, &config, |_, r, _| {
        if r.alpha.as_ref().is_some_and(|a| a.win_percentage > 0.5) {
            wins += 1;
        }
    })?;

    print!("{}", log.metrics_csv());
    println!("{wins} of {} evaluated decks won more than half their games", log.evaluations);
    println!("filled {} of {} cells", archive.len(), problem.measures.total_cells());
    Ok(())
}
