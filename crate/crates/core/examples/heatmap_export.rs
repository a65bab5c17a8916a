// Usage: cargo run --release --example heatmap_export
//
// Prints an archive as a character grid (rows: average turns, columns:
// average hand size) and writes the numeric grid as CSV.

use dsame::archive::Archive;
use dsame::qd::{map_elites_run, MapElitesConfig};
use dsame::settings::Settings;

fn main() -> dsame::Result<()> {
    let settings = Settings::default();
    let problem = settings.problem()?;
    let evaluator = settings.evaluator(&problem)?;
    let mut archive = Archive::new(problem.measures);
    let cfg = MapElitesConfig { iterations: 3_000, initial_population: 100, seed: 9, ..MapElitesConfig::default() };
    map_elites_run(&evaluator, &mut archive, &problem.decks, &cfg)?;

    let heatmap = archive.export_heatmap();
    let shades = [' ', '.', ':', '-', '=', '+', '*', '#', '%', '@'];
    for row in &heatmap.grid {
        let line: String = row
            .iter()
            .map(|c| match c {
                None => '·',
                Some(f) => shades[(((f + 30.0) / 60.0 * 9.0).round() as usize).min(9)],
            })
            .collect();
        println!("|{line}|");
    }
    let path = std::env::temp_dir().join("dsame_heatmap.csv");
    std::fs::write(&path, heatmap.to_csv()).map_err(|e| dsame::Error::io(&path, e))?;
    println!("{} cells filled, grid written to {}", heatmap.filled(), path.display());
    Ok(())
}
