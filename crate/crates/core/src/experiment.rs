//! Named algorithm variants and multi-trial comparison suites.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::archive::Archive;
use crate::dsa_me::{dsa_me_run, elite_data_retrain, DsaMeConfig, Problem, RunResult, SurrogateKind, TrainingMode};
use crate::qd::Evaluator;
use crate::rng::{self, tag};
use crate::settings::Settings;
use crate::surrogate::{DataBuffer, SurrogateModel};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    MapElites,
    OfflineDsaMe,
    LsaMe,
    DsaMe,
    OfflineDsaMeAd,
    DsaMeAd,
    DsaMeNoReset,
    /// The final model of the same trial's `dsa_me` run, frozen.
    OfflineFrozen,
    /// A fresh model trained on the same trial's `dsa_me` buffer, frozen.
    OfflineEliteData,
}

impl Variant {
    pub const ALL: [Variant; 9] = [
        Variant::MapElites,
        Variant::OfflineDsaMe,
        Variant::LsaMe,
        Variant::DsaMe,
        Variant::OfflineDsaMeAd,
        Variant::DsaMeAd,
        Variant::DsaMeNoReset,
        Variant::OfflineFrozen,
        Variant::OfflineEliteData,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::MapElites => "map_elites",
            Variant::OfflineDsaMe => "offline_dsa_me",
            Variant::LsaMe => "lsa_me",
            Variant::DsaMe => "dsa_me",
            Variant::OfflineDsaMeAd => "offline_dsa_me_ad",
            Variant::DsaMeAd => "dsa_me_ad",
            Variant::DsaMeNoReset => "dsa_me_no_reset",
            Variant::OfflineFrozen => "offline_frozen",
            Variant::OfflineEliteData => "offline_elite_data",
        }
    }

    /// Whether the variant reuses a `dsa_me` run of the same trial.
    pub fn needs_source(self) -> bool {
        matches!(self, Variant::OfflineFrozen | Variant::OfflineEliteData)
    }

    /// Applies the preset on top of a configured run.
    pub fn configure(self, base: &DsaMeConfig) -> DsaMeConfig {
        let (surrogate, training_mode, use_ancillary, reset) = match self {
            Variant::MapElites => (SurrogateKind::None, TrainingMode::Online, false, true),
            Variant::OfflineDsaMe => (SurrogateKind::Mlp, TrainingMode::OfflineRandomPretrain, false, true),
            Variant::LsaMe => (SurrogateKind::Linear, TrainingMode::Online, false, true),
            Variant::DsaMe => (SurrogateKind::Mlp, TrainingMode::Online, false, true),
            Variant::OfflineDsaMeAd => (SurrogateKind::Mlp, TrainingMode::OfflineRandomPretrain, true, true),
            Variant::DsaMeAd => (SurrogateKind::Mlp, TrainingMode::Online, true, true),
            Variant::DsaMeNoReset => (SurrogateKind::Mlp, TrainingMode::Online, false, false),
            Variant::OfflineFrozen | Variant::OfflineEliteData => {
                (SurrogateKind::Mlp, TrainingMode::FrozenCheckpoint, false, true)
            }
        };
        DsaMeConfig { surrogate, training_mode, use_ancillary, reset_inner_archive: reset, ..base.clone() }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| {
            let names: Vec<_> = Variant::ALL.iter().map(|v| v.name()).collect();
            Error::Config(format!("unknown variant {s:?}; valid variants: {}", names.join(", ")))
        })
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(self.name())
    }
}

pub fn trial_seed(base: u64, trial: usize) -> u64 {
    rng::derive_seed(base, &[tag::TRIAL, trial as u64])
}

/// Runs one variant. Dependent variants take their model from `source`, a
/// `dsa_me` run with the same seed; without one they use
/// `surrogate.checkpoint` (frozen only) or run `dsa_me` first.
pub fn run_variant<E: Evaluator + ?Sized>(
    settings: &Settings,
    problem: &Problem,
    evaluator: &E,
    variant: Variant,
    seed: u64,
    source: Option<&RunResult>,
) -> Result<RunResult> {
    let config = variant.configure(&settings.run_config(seed));
    if !variant.needs_source() {
        return dsa_me_run(&config, problem, evaluator, None);
    }
    let checkpoint = &settings.surrogate.checkpoint;
    if variant == Variant::OfflineFrozen && source.is_none() && !checkpoint.is_empty() {
        let model = SurrogateModel::load_checkpoint(Path::new(checkpoint))?;
        return dsa_me_run(&config, problem, evaluator, Some(model));
    }
    let owned;
    let source = match source {
        Some(s) => s,
        None => {
            owned = dsa_me_run(&Variant::DsaMe.configure(&settings.run_config(seed)), problem, evaluator, None)?;
            &owned
        }
    };
    let model = match variant {
        Variant::OfflineFrozen => {
            let m = source.final_model.as_ref().ok_or_else(|| Error::invalid("source run has no model"))?;
            // The same bytes a saved checkpoint would hold.
            SurrogateModel::from_checkpoint_bytes(&m.to_checkpoint_bytes())?
        }
        _ => elite_data_retrain(&source.buffer, &config, rng::derive_seed(seed, &[tag::PRETRAIN]))?,
    };
    dsa_me_run(&config, problem, evaluator, Some(model))
}

/// Writes a run directory: the run's files plus `cardset.csv` and per-trial
/// `ccdf.csv`.
pub fn save_run(dir: &Path, run: &RunResult, settings: &Settings, problem: &Problem) -> Result<()> {
    run.save(dir, &settings.to_flat_text())?;
    let cardset = dir.join("cardset.csv");
    std::fs::write(&cardset, problem.decks.cardset.to_csv()).map_err(|e| Error::io(&cardset, e))?;
    let ccdf = dir.join("ccdf.csv");
    let mut text = String::from("threshold,fraction\n");
    for (t, f) in run.ground_truth_archive.ccdf(&ccdf_thresholds())? {
        let _ = writeln!(text, "{t},{f}");
    }
    std::fs::write(&ccdf, text).map_err(|e| Error::io(&ccdf, e))
}

/// Integer objective thresholds spanning `[-30, 30]`.
pub fn ccdf_thresholds() -> Vec<f64> {
    (-30..=30).map(f64::from).collect()
}

/// Mean and standard error (sample standard deviation over the square root
/// of the count). The error is 0 for a single value.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Best win percentage among the archive's elites, matched against the
/// buffer rows with the same genome and objective. Works for archives
/// reloaded from CSV, which carry no ancillary data.
pub fn max_win_percentage_from(archive: &Archive, buffer: &DataBuffer) -> Option<f64> {
    let mut best: Option<f64> = None;
    for e in archive.elites() {
        let x: Vec<f64> = e.genome.counts().iter().map(|&c| f64::from(c)).collect();
        for s in buffer.samples() {
            if s.f == e.objective && s.x == x {
                if let Some(a) = &s.alpha {
                    best = Some(best.map_or(a.win_percentage, |b: f64| b.max(a.win_percentage)));
                }
            }
        }
    }
    best
}

pub const SUMMARY_METRICS: [&str; 6] =
    ["max_objective", "max_win_percentage", "coverage", "qd_score", "qd_score_floored", "evaluations_used"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialMetrics {
    pub max_objective: f64,
    pub max_win_percentage: f64,
    pub coverage: f64,
    pub qd_score: f64,
    pub qd_score_floored: f64,
    pub evaluations_used: f64,
}

impl TrialMetrics {
    pub fn of(run: &RunResult, objective_floor: f64) -> Self {
        let a = &run.ground_truth_archive;
        Self {
            max_objective: a.max_objective().unwrap_or(f64::NAN),
            max_win_percentage: a.max_win_percentage().unwrap_or(f64::NAN),
            coverage: a.coverage(),
            qd_score: a.qd_score(0.0),
            qd_score_floored: a.qd_score(objective_floor),
            evaluations_used: run.evaluations_used as f64,
        }
    }

    pub fn get(&self, metric: &str) -> Option<f64> {
        Some(match metric {
            "max_objective" => self.max_objective,
            "max_win_percentage" => self.max_win_percentage,
            "coverage" => self.coverage,
            "qd_score" => self.qd_score,
            "qd_score_floored" => self.qd_score_floored,
            "evaluations_used" => self.evaluations_used,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub variant: Variant,
    pub metric: String,
    pub mean: f64,
    pub stderr: f64,
    pub trials: usize,
}

#[derive(Debug, Clone)]
pub struct CellFailure {
    pub variant: Variant,
    pub trial: usize,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    pub rows: Vec<SummaryRow>,
    /// Per variant, per trial; `None` where the cell failed.
    pub trials: Vec<(Variant, Vec<Option<TrialMetrics>>)>,
    pub failures: Vec<CellFailure>,
    pub ccdf: Vec<(Variant, Vec<(f64, f64)>)>,
}

impl SuiteOutcome {
    pub fn row(&self, variant: Variant, metric: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.variant == variant && r.metric == metric)
    }

    pub fn trial_metrics(&self, variant: Variant) -> Option<&[Option<TrialMetrics>]> {
        self.trials.iter().find(|(v, _)| *v == variant).map(|(_, t)| t.as_slice())
    }

    /// `variant,metric,mean,stderr,trials`; failed cells appear as a
    /// `failed_trials` row.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("variant,metric,mean,stderr,trials\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{},{}", r.variant, r.metric, r.mean, r.stderr, r.trials);
        }
        out
    }

    pub fn ccdf_csv(&self) -> String {
        let mut out = String::from("variant,threshold,fraction\n");
        for (v, curve) in &self.ccdf {
            for (t, f) in curve {
                let _ = writeln!(out, "{v},{t},{f}");
            }
        }
        out
    }

    /// For every pair of variants and comparison metric, how many trials
    /// each side won.
    pub fn paired_csv(&self) -> String {
        let mut out = String::from("variant_a,variant_b,metric,a_greater,b_greater,ties,pairs\n");
        for (i, (va, ta)) in self.trials.iter().enumerate() {
            for (vb, tb) in &self.trials[i + 1..] {
                for metric in ["qd_score_floored", "coverage", "max_objective"] {
                    let (mut a, mut b, mut ties, mut pairs) = (0, 0, 0, 0);
                    for (x, y) in ta.iter().zip(tb) {
                        let (Some(x), Some(y)) = (x, y) else { continue };
                        let (x, y) = (x.get(metric).unwrap(), y.get(metric).unwrap());
                        pairs += 1;
                        if x > y {
                            a += 1;
                        } else if y > x {
                            b += 1;
                        } else {
                            ties += 1;
                        }
                    }
                    let _ = writeln!(out, "{va},{vb},{metric},{a},{b},{ties},{pairs}");
                }
            }
        }
        out
    }
}

/// Runs every (variant, trial) cell, persisting each under
/// `out_dir/<variant>/<trial>/`, then writes `summary.csv`, `ccdf.csv` and
/// `paired.csv`. A failing cell leaves `error.txt` in its directory and the
/// suite carries on.
pub fn run_suite<E: Evaluator + ?Sized>(settings: &Settings, evaluator: &E, out_dir: &Path) -> Result<SuiteOutcome> {
    settings.validate()?;
    let problem = settings.problem()?;
    let trials = settings.experiment.trials;
    let variants = &settings.experiment.variants;
    let seeds: Vec<u64> = (0..trials).map(|t| trial_seed(settings.experiment.seed, t)).collect();
    let cell_dir = |v: Variant, t: usize| -> PathBuf { out_dir.join(v.name()).join(t.to_string()) };
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let persist = |v: Variant, t: usize, r: &Result<RunResult>| -> Result<()> {
        let dir = cell_dir(v, t);
        match r {
            Ok(run) => save_run(&dir, run, settings, &problem),
            Err(e) => {
                std::fs::create_dir_all(&dir).map_err(|err| Error::io(&dir, err))?;
                let p = dir.join("error.txt");
                std::fs::write(&p, format!("{e}\n")).map_err(|err| Error::io(&p, err))
            }
        }
    };

    // Independent cells first. A dependent variant without `dsa_me` in the
    // list still needs its source runs; those are not persisted.
    let needs_source = variants.iter().any(|v| v.needs_source());
    let mut first: Vec<Variant> = variants.iter().copied().filter(|v| !v.needs_source()).collect();
    if needs_source && !first.contains(&Variant::DsaMe) {
        first.push(Variant::DsaMe);
    }
    let cells: Vec<(Variant, usize)> = first.iter().flat_map(|&v| (0..trials).map(move |t| (v, t))).collect();
    let first_results: Vec<Result<RunResult>> = cells
        .par_iter()
        .map(|&(v, t)| {
            let r = run_variant(settings, &problem, evaluator, v, seeds[t], None);
            if variants.contains(&v) {
                persist(v, t, &r)?;
            }
            Ok(r)
        })
        .collect::<Result<_>>()?;
    let mut results: Vec<((Variant, usize), Result<RunResult>)> = cells.into_iter().zip(first_results).collect();

    let dependent: Vec<(Variant, usize)> = variants
        .iter()
        .copied()
        .filter(|v| v.needs_source())
        .flat_map(|v| (0..trials).map(move |t| (v, t)))
        .collect();
    let sources: Vec<Option<&RunResult>> = (0..trials)
        .map(|t| {
            results.iter().find(|((v, tt), _)| *v == Variant::DsaMe && *tt == t).and_then(|(_, r)| r.as_ref().ok())
        })
        .collect();
    let dependent_results: Vec<Result<RunResult>> = dependent
        .par_iter()
        .map(|&(v, t)| {
            let r = match sources[t] {
                Some(src) => run_variant(settings, &problem, evaluator, v, seeds[t], Some(src)),
                None => Err(Error::invalid(format!("dsa_me trial {t} failed, so {v} has no source"))),
            };
            persist(v, t, &r)?;
            Ok(r)
        })
        .collect::<Result<_>>()?;
    results.extend(dependent.into_iter().zip(dependent_results));

    let floor = settings.archive.objective_floor;
    let thresholds = ccdf_thresholds();
    let mut outcome = SuiteOutcome { rows: Vec::new(), trials: Vec::new(), failures: Vec::new(), ccdf: Vec::new() };
    for &v in variants {
        let mut per_trial = Vec::with_capacity(trials);
        let mut pooled = vec![0.0; thresholds.len()];
        for t in 0..trials {
            let (_, r) = results.iter().find(|((vv, tt), _)| *vv == v && *tt == t).expect("every cell ran");
            match r {
                Ok(run) => {
                    per_trial.push(Some(TrialMetrics::of(run, floor)));
                    for (acc, (_, f)) in pooled.iter_mut().zip(run.ground_truth_archive.ccdf(&thresholds)?) {
                        *acc += f;
                    }
                }
                Err(e) => {
                    per_trial.push(None);
                    outcome.failures.push(CellFailure { variant: v, trial: t, message: e.to_string() });
                }
            }
        }
        let ok: Vec<&TrialMetrics> = per_trial.iter().flatten().collect();
        for metric in SUMMARY_METRICS {
            let values: Vec<f64> = ok.iter().map(|m| m.get(metric).unwrap()).filter(|x| !x.is_nan()).collect();
            let (mean, stderr) = mean_stderr(&values);
            outcome.rows.push(SummaryRow { variant: v, metric: metric.into(), mean, stderr, trials: values.len() });
        }
        let failed = trials - ok.len();
        if failed > 0 {
            outcome.rows.push(SummaryRow {
                variant: v,
                metric: "failed_trials".into(),
                mean: failed as f64,
                stderr: 0.0,
                trials,
            });
        }
        // Pooled over trials: elites above the threshold over all cells of
        // all successful trials.
        let n = ok.len().max(1) as f64;
        outcome.ccdf.push((v, thresholds.iter().zip(&pooled).map(|(t, f)| (*t, f / n)).collect()));
        outcome.trials.push((v, per_trial));
    }

    for (name, body) in
        [("summary.csv", outcome.summary_csv()), ("ccdf.csv", outcome.ccdf_csv()), ("paired.csv", outcome.paired_csv())]
    {
        let p = out_dir.join(name);
        std::fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archive::EliteSource;

    fn smoke() -> Settings {
        let mut s = Settings::default();
        s.deck.cardset_size = 20;
        s.dsa_me.evaluations = 60;
        s.dsa_me.inner_iterations = 200;
        s.map_elites.initial_population = 20;
        s.surrogate.epochs = 2;
        s.surrogate.offline_pretrain_count = 40;
        s.surrogate.pretrain_repetitions = 1;
        s.sim.games_per_opponent = 2;
        s.experiment.trials = 2;
        s
    }

    #[test]
    fn mean_stderr_hand_values() {
        let (m, se) = mean_stderr(&[2.0, 4.0, 6.0]);
        assert_eq!(m, 4.0);
        assert!((se - 1.1547005383792515).abs() < 1e-12);
        assert_eq!(mean_stderr(&[3.0]), (3.0, 0.0));
        assert!(mean_stderr(&[]).0.is_nan());
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        let err = "dsa".parse::<Variant>().unwrap_err().to_string();
        assert!(err.contains("offline_elite_data"));
    }

    #[test]
    fn presets_set_only_their_fields() {
        let base = DsaMeConfig { evaluations: 77, seed: 3, ..DsaMeConfig::default() };
        let c = Variant::DsaMeNoReset.configure(&base);
        assert!(!c.reset_inner_archive);
        assert_eq!((c.evaluations, c.seed), (77, 3));
        assert_eq!(Variant::LsaMe.configure(&base).surrogate, SurrogateKind::Linear);
        assert!(Variant::DsaMeAd.configure(&base).use_ancillary);
        assert_eq!(Variant::OfflineEliteData.configure(&base).training_mode, TrainingMode::FrozenCheckpoint);
    }

    #[test]
    fn suite_summary_matches_persisted_archives() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = smoke();
        s.experiment.variants = vec![Variant::MapElites, Variant::OfflineFrozen];
        let problem = s.problem().unwrap();
        let ev = s.evaluator(&problem).unwrap();
        let out = run_suite(&s, &ev, dir.path()).unwrap();
        assert!(out.failures.is_empty());
        for v in ["map_elites", "offline_frozen"] {
            for t in 0..2 {
                assert!(dir.path().join(v).join(t.to_string()).join("archive.csv").exists());
            }
        }
        // The source runs are not persisted when dsa_me is not listed.
        assert!(!dir.path().join("dsa_me").exists());

        let mut qd = Vec::new();
        let mut wins = Vec::new();
        for t in 0..2 {
            let d = dir.path().join("map_elites").join(t.to_string());
            let a = Archive::from_csv(problem.measures, &std::fs::read_to_string(d.join("archive.csv")).unwrap(), EliteSource::GroundTruth).unwrap();
            let b = DataBuffer::from_csv(&std::fs::read_to_string(d.join("buffer.csv")).unwrap()).unwrap();
            qd.push(a.qd_score(0.0));
            wins.push(max_win_percentage_from(&a, &b).unwrap());
        }
        let row = out.row(Variant::MapElites, "qd_score").unwrap();
        assert_eq!(row.mean, mean_stderr(&qd).0);
        assert_eq!(out.row(Variant::MapElites, "max_win_percentage").unwrap().mean, mean_stderr(&wins).0);
        let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        assert!(summary.starts_with("variant,metric,mean,stderr,trials\n"));
        let ccdf = std::fs::read_to_string(dir.path().join("ccdf.csv")).unwrap();
        assert_eq!(ccdf.lines().count(), 1 + 2 * 61);
    }

    #[test]
    fn failing_cells_are_marked() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = smoke();
        s.experiment.trials = 1;
        s.experiment.variants = vec![Variant::MapElites, Variant::OfflineDsaMeAd];
        let problem = s.problem().unwrap();
        // Ancillary variants need ancillary data, which this evaluator lacks.
        let ev = crate::qd::tests::ToyEvaluator::new();
        let out = run_suite(&s, &ev, dir.path()).unwrap();
        assert_eq!(out.failures.len(), 1);
        assert_eq!(out.failures[0].variant, Variant::OfflineDsaMeAd);
        assert!(dir.path().join("offline_dsa_me_ad/0/error.txt").exists());
        assert_eq!(out.row(Variant::OfflineDsaMeAd, "failed_trials").unwrap().mean, 1.0);
        assert_eq!(out.row(Variant::MapElites, "coverage").unwrap().trials, 1);
        drop(problem);
    }
}
