// Usage: cargo run --release --example retention
//
// How many cells of the final surrogate archive survive ground truth, next to
// a perfect surrogate (the simulator itself).

use dsame::archive::Archive;
use dsame::dsa_me::{dsa_me_run, retention_analysis, PerfectSurrogate};
use dsame::experiment::Variant;
use dsame::qd::{map_elites_run, MapElitesConfig};
use dsame::settings::Settings;

fn main() -> dsame::Result<()> {
    let mut settings = Settings::default();
    settings.dsa_me.evaluations = 500;
    let problem = settings.problem()?;
    let evaluator = settings.evaluator(&problem)?;

    let run = dsa_me_run(&Variant::DsaMe.configure(&settings.run_config(3)), &problem, &evaluator, None)?;
    let surrogate_archive = run.last_surrogate_archive.expect("at least one outer iteration");
    let (_, learned) = retention_analysis(&surrogate_archive, &evaluator, &problem.measures)?;
    print!("learned surrogate\n{}", learned.to_text());

    let mut perfect_archive = Archive::new(problem.measures);
    let cfg = MapElitesConfig { iterations: 5_000, initial_population: 100, seed: 3, ..MapElitesConfig::default() };
    map_elites_run(&PerfectSurrogate(&evaluator), &mut perfect_archive, &problem.decks, &cfg)?;
    let (_, perfect) = retention_analysis(&perfect_archive, &evaluator, &problem.measures)?;
    print!("perfect surrogate\n{}", perfect.to_text());
    Ok(())
}
