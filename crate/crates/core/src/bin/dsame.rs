//! `dsame`: run, compare and inspect deckbuilding searches on MiniCard.
//!
//! Exit status: 0 on success, 2 when a suite finished with failed cells,
//! 1 on configuration or other errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dsame::archive::{Archive, EliteSource};
use dsame::dsa_me::{offline_pretrain, retention_analysis, SurrogateEvaluator};
use dsame::experiment::{ccdf_thresholds, run_suite, run_variant, save_run, trial_seed, Variant};
use dsame::qd::{map_elites_run, Evaluator, MapElitesConfig};
use dsame::rng::{derive_seed, tag};
use dsame::settings::Settings;
use dsame::surrogate::{AncillaryData, SurrogateModel};
use dsame::{Error, Result};

#[derive(Parser)]
#[command(name = "dsame", version, about = "Surrogate-assisted MAP-Elites for MiniCard deckbuilding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Configuration file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// One variant, one trial.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "dsa_me")]
        variant: String,
        /// Trial index; picks the trial seed unless --seed is given.
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Every configured variant for every trial, plus summary tables.
    Suite {
        #[command(flatten)]
        common: Common,
    },
    /// Search a saved run's model and check which elites survive ground truth.
    Retention {
        #[command(flatten)]
        common: Common,
        /// Run directory holding model.ckpt (and config.txt if --config is absent).
        #[arg(long)]
        run: PathBuf,
    },
    /// Objective grid of a saved archive.
    Heatmap {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        archive: PathBuf,
    },
    /// Pooled CCDF over one or more saved archives.
    Ccdf {
        #[command(flatten)]
        common: Common,
        #[arg(long, required = true, num_args = 1..)]
        archive: Vec<PathBuf>,
    },
    /// Train a model on random decks.
    Pretrain {
        #[command(flatten)]
        common: Common,
    },
    /// Re-evaluate one deck and print its objective, measures and statistics.
    Replay {
        #[command(flatten)]
        common: Common,
        /// Card counts separated by `,` or `;`.
        #[arg(long, conflicts_with = "deck_file")]
        deck: Option<String>,
        #[arg(long)]
        deck_file: Option<PathBuf>,
    },
    /// Print the documented default configuration.
    Config {
        #[command(flatten)]
        common: Common,
    },
}

fn load_settings(path: Option<&Path>) -> Result<Settings> {
    match path {
        Some(p) => Settings::load(p),
        None => Ok(Settings::default()),
    }
}

fn require_out(common: &Common) -> Result<&Path> {
    common.out.as_deref().ok_or_else(|| Error::Config("--out is required".into()))
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            std::fs::write(p, text).map_err(|e| Error::io(p, e))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn execute(command: Command) -> Result<ExitCode> {
    match command {
        Command::Run { common, variant, trial } => {
            let settings = load_settings(common.config.as_deref())?;
            let variant: Variant = variant.parse()?;
            let out = require_out(&common)?;
            let seed = common.seed.unwrap_or_else(|| trial_seed(settings.experiment.seed, trial));
            let problem = settings.problem()?;
            let evaluator = settings.evaluator(&problem)?;
            let run = run_variant(&settings, &problem, &evaluator, variant, seed, None)?;
            save_run(out, &run, &settings, &problem)?;
            let a = &run.ground_truth_archive;
            println!(
                "{variant} seed={seed} evaluations={} coverage={} qd_score={} qd_score_floored={}",
                run.evaluations_used,
                a.coverage(),
                a.qd_score(0.0),
                a.qd_score(settings.archive.objective_floor)
            );
        }
        Command::Suite { common } => {
            let mut settings = load_settings(common.config.as_deref())?;
            if let Some(seed) = common.seed {
                settings.experiment.seed = seed;
            }
            let out = require_out(&common)?;
            let problem = settings.problem()?;
            let evaluator = settings.evaluator(&problem)?;
            let outcome = run_suite(&settings, &evaluator, out)?;
            print!("{}", outcome.summary_csv());
            for f in &outcome.failures {
                eprintln!("failed: {} trial {}: {}", f.variant, f.trial, f.message);
            }
            if !outcome.failures.is_empty() {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Retention { common, run } => {
            let settings = match &common.config {
                Some(p) => Settings::load(p)?,
                None => Settings::load(&run.join("config.txt"))?,
            };
            let out = require_out(&common)?;
            let model = SurrogateModel::load_checkpoint(&run.join("model.ckpt"))?;
            let problem = settings.problem()?;
            let evaluator = settings.evaluator(&problem)?;
            let seed = derive_seed(common.seed.unwrap_or(settings.experiment.seed), &[tag::INNER]);
            let mut surrogate_archive = Archive::new(problem.measures);
            let inner = MapElitesConfig {
                iterations: settings.dsa_me.inner_iterations,
                initial_population: settings.map_elites.initial_population,
                batch_size: settings.map_elites.batch_size,
                seed,
                metrics_stride: 0,
                qd_floor: 0.0,
            };
            map_elites_run(&SurrogateEvaluator { model: &model }, &mut surrogate_archive, &problem.decks, &inner)?;
            let (fresh, report) = retention_analysis(&surrogate_archive, &evaluator, &problem.measures)?;
            std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
            write_or_print(Some(&out.join("surrogate_archive.csv")), &surrogate_archive.to_csv())?;
            write_or_print(Some(&out.join("retention_archive.csv")), &fresh.to_csv())?;
            write_or_print(Some(&out.join("retention.txt")), &report.to_text())?;
            print!("{}", report.to_text());
        }
        Command::Heatmap { common, archive } => {
            let settings = load_settings(common.config.as_deref())?;
            let a = Archive::from_csv(settings.measure_space()?, &read(&archive)?, EliteSource::GroundTruth)?;
            write_or_print(common.out.as_deref(), &a.export_heatmap().to_csv())?;
        }
        Command::Ccdf { common, archive } => {
            let settings = load_settings(common.config.as_deref())?;
            let space = settings.measure_space()?;
            let thresholds = ccdf_thresholds();
            let mut pooled = vec![0.0; thresholds.len()];
            for path in &archive {
                let a = Archive::from_csv(space, &read(path)?, EliteSource::GroundTruth)?;
                for (acc, (_, f)) in pooled.iter_mut().zip(a.ccdf(&thresholds)?) {
                    *acc += f / archive.len() as f64;
                }
            }
            let mut text = String::from("threshold,fraction\n");
            for (t, f) in thresholds.iter().zip(pooled) {
                text.push_str(&format!("{t},{f}\n"));
            }
            write_or_print(common.out.as_deref(), &text)?;
        }
        Command::Pretrain { common } => {
            let settings = load_settings(common.config.as_deref())?;
            let out = require_out(&common)?;
            let problem = settings.problem()?;
            let evaluator = settings.evaluator(&problem)?;
            let config = settings.run_config(common.seed.unwrap_or(settings.experiment.seed));
            let (model, buffer) =
                offline_pretrain(&evaluator, &problem, settings.surrogate.offline_pretrain_count, &config)?;
            std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
            model.save_checkpoint(&out.join("model.ckpt"))?;
            write_or_print(Some(&out.join("buffer.csv")), &buffer.to_csv())?;
            write_or_print(Some(&out.join("config.txt")), &settings.to_flat_text())?;
            println!("pretrained on {} decks", buffer.len());
        }
        Command::Replay { common, deck, deck_file } => {
            let settings = load_settings(common.config.as_deref())?;
            let text = match (deck, deck_file) {
                (Some(d), None) => d,
                (None, Some(p)) => read(&p)?.trim().to_string(),
                _ => return Err(Error::Config("give exactly one of --deck or --deck-file".into())),
            };
            let problem = settings.problem()?;
            let genome = problem.decks.parse_deck(&text)?;
            let evaluator = settings.evaluator(&problem)?;
            let r = evaluator.evaluate(&genome, common.seed.unwrap_or(0))?;
            let mut line = format!("f={} m0={} m1={}", r.f, r.m[0], r.m[1]);
            if let Some(alpha) = &r.alpha {
                for (name, v) in AncillaryData::FIELDS.iter().zip(alpha.to_array()) {
                    line.push_str(&format!(" {name}={v}"));
                }
            }
            line.push('\n');
            write_or_print(common.out.as_deref(), &line)?;
            if common.out.is_some() {
                print!("{line}");
            }
        }
        Command::Config { common } => {
            let settings = load_settings(common.config.as_deref())?;
            write_or_print(common.out.as_deref(), &settings.to_documented_text())?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
