//! The surrogate-assisted outer loop and its experiment variants.
//!
//! One outer iteration trains the surrogate on every ground-truth sample
//! collected so far, runs a full MAP-Elites inner loop against the surrogate,
//! then evaluates every elite of that surrogate archive on the ground truth.
//! The ground-truth archive accumulates across iterations and is the result.

use std::fmt::Write as _;
use std::path::Path;

use crate::archive::{cell_of, Archive, Elite, EliteSource, MeasureSpace};
use crate::deck::{encode_bag_of_cards, DeckGenome, DeckSpace};
use crate::qd::{evaluate_all, map_elites_run, map_elites_run_with, EvaluationResult, Evaluator, MapElitesConfig};
use crate::rng::{self, tag};
use crate::surrogate::{
    initialize_model, DataBuffer, LabeledSample, ModelKind, SurrogateModel, TrainConfig, BASE_OUTPUTS, FULL_OUTPUTS,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurrogateKind {
    Mlp,
    Linear,
    /// No surrogate: plain MAP-Elites on the ground truth.
    None,
}

impl SurrogateKind {
    fn model_kind(self) -> Option<ModelKind> {
        match self {
            SurrogateKind::Mlp => Some(ModelKind::Mlp),
            SurrogateKind::Linear => Some(ModelKind::Linear),
            SurrogateKind::None => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainingMode {
    /// Warm-started retraining on the full buffer every outer iteration.
    Online,
    /// A model pretrained on random decks, then frozen.
    OfflineRandomPretrain,
    /// A supplied model, never trained.
    FrozenCheckpoint,
    /// Reinitialized and retrained from scratch every outer iteration.
    FromScratchEachOuter,
}

/// The search problem: decks and where their measures land.
#[derive(Debug, Clone)]
pub struct Problem {
    pub decks: DeckSpace,
    pub measures: MeasureSpace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DsaMeConfig {
    /// Ground-truth evaluation budget.
    pub evaluations: usize,
    /// Inner-loop MAP-Elites iterations per outer iteration.
    pub inner_iterations: usize,
    /// Random decks seeding both the outer and inner loops.
    pub initial_population: usize,
    pub inner_batch_size: usize,
    pub surrogate: SurrogateKind,
    pub training_mode: TrainingMode,
    pub reset_inner_archive: bool,
    pub use_ancillary: bool,
    pub offline_pretrain_count: usize,
    /// Offline and elite-data models train for `epochs * pretrain_repetitions`.
    pub pretrain_repetitions: usize,
    pub train: TrainConfig,
    /// Lowest attainable objective, used for the floored QD-score.
    pub objective_floor: f64,
    pub seed: u64,
}

impl Default for DsaMeConfig {
    fn default() -> Self {
        Self {
            evaluations: 1_000,
            inner_iterations: 20_000,
            initial_population: 100,
            inner_batch_size: 10,
            surrogate: SurrogateKind::Mlp,
            training_mode: TrainingMode::Online,
            reset_inner_archive: true,
            use_ancillary: false,
            offline_pretrain_count: 10_000,
            pretrain_repetitions: 5,
            train: TrainConfig::default(),
            objective_floor: -30.0,
            seed: 0,
        }
    }
}

impl DsaMeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.initial_population == 0 {
            return Err(Error::invalid("initial population must be >= 1"));
        }
        if self.evaluations < self.initial_population {
            return Err(Error::invalid("evaluation budget must be >= initial population"));
        }
        if self.surrogate != SurrogateKind::None && self.inner_iterations < self.initial_population {
            return Err(Error::invalid("inner iterations must be >= initial population"));
        }
        if self.inner_batch_size == 0 || self.train.batch_size == 0 {
            return Err(Error::invalid("batch sizes must be >= 1"));
        }
        Ok(())
    }

    pub fn output_dim(&self) -> usize {
        if self.use_ancillary {
            FULL_OUTPUTS
        } else {
            BASE_OUTPUTS
        }
    }
}

/// Evaluates decks by surrogate prediction alone.
pub struct SurrogateEvaluator<'a> {
    pub model: &'a SurrogateModel,
}

impl Evaluator for SurrogateEvaluator<'_> {
    fn evaluate(&self, genome: &DeckGenome, _seed: u64) -> Result<EvaluationResult> {
        let p = self.model.predict(&encode_bag_of_cards(genome))?;
        Ok(EvaluationResult { f: p.f_hat, m: p.m_hat, alpha: p.alpha_hat })
    }

    fn has_ancillary(&self) -> bool {
        self.model.output_dim() == FULL_OUTPUTS
    }

    fn source(&self) -> EliteSource {
        EliteSource::Surrogate
    }

    fn parallel(&self) -> bool {
        false
    }
}

/// A ground-truth evaluator presented as a surrogate.
pub struct PerfectSurrogate<E>(pub E);

impl<E: Evaluator> Evaluator for PerfectSurrogate<E> {
    fn evaluate(&self, genome: &DeckGenome, seed: u64) -> Result<EvaluationResult> {
        self.0.evaluate(genome, seed)
    }

    fn has_ancillary(&self) -> bool {
        self.0.has_ancillary()
    }

    fn source(&self) -> EliteSource {
        EliteSource::Surrogate
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuterMetrics {
    pub outer_iteration: usize,
    pub evaluations_used: usize,
    pub coverage: f64,
    pub qd_score: f64,
    pub qd_score_floored: f64,
    pub max_objective: f64,
    pub max_win_percentage: f64,
    pub surrogate_train_loss: f64,
}

pub const METRICS_CSV_HEADER: &str = "outer_iteration,evaluations_used,coverage,qd_score,qd_score_floored,max_objective,max_win_percentage,surrogate_train_loss";

#[derive(Debug, Clone)]
pub struct RunResult {
    pub ground_truth_archive: Archive,
    pub buffer: DataBuffer,
    pub metrics_history: Vec<OuterMetrics>,
    pub final_model: Option<SurrogateModel>,
    pub last_surrogate_archive: Option<Archive>,
    pub evaluations_used: usize,
}

impl RunResult {
    pub fn metrics_csv(&self) -> String {
        let mut out = format!("{METRICS_CSV_HEADER}\n");
        for m in &self.metrics_history {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                m.outer_iteration,
                m.evaluations_used,
                m.coverage,
                m.qd_score,
                m.qd_score_floored,
                m.max_objective,
                m.max_win_percentage,
                m.surrogate_train_loss
            );
        }
        out
    }

    /// Writes `archive.csv`, `buffer.csv`, `metrics.csv`, `model.ckpt` (when a
    /// model exists) and `config.txt` into `dir`.
    pub fn save(&self, dir: &Path, config_text: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, body: &[u8]| {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| Error::io(p, e))
        };
        write("archive.csv", self.ground_truth_archive.to_csv().as_bytes())?;
        write("buffer.csv", self.buffer.to_csv().as_bytes())?;
        write("metrics.csv", self.metrics_csv().as_bytes())?;
        write("config.txt", config_text.as_bytes())?;
        if let Some(model) = &self.final_model {
            model.save_checkpoint(&dir.join("model.ckpt"))?;
        }
        Ok(())
    }
}

fn snapshot(archive: &Archive, outer: usize, evals: usize, floor: f64, loss: f64) -> OuterMetrics {
    OuterMetrics {
        outer_iteration: outer,
        evaluations_used: evals,
        coverage: archive.coverage(),
        qd_score: archive.qd_score(0.0),
        qd_score_floored: archive.qd_score(floor),
        max_objective: archive.max_objective().unwrap_or(f64::NAN),
        max_win_percentage: archive.max_win_percentage().unwrap_or(f64::NAN),
        surrogate_train_loss: loss,
    }
}

fn sample_of(genome: &DeckGenome, r: &EvaluationResult) -> LabeledSample {
    LabeledSample { x: encode_bag_of_cards(genome), f: r.f, m: r.m, alpha: r.alpha }
}

fn ground_truth_elite(genome: DeckGenome, r: EvaluationResult, seed: u64) -> Elite {
    Elite { genome, objective: r.f, measures: r.m, ancillary: r.alpha, source: EliteSource::GroundTruth, eval_seed: seed }
}

fn train_config(config: &DsaMeConfig, seed: u64, epochs: usize) -> TrainConfig {
    TrainConfig { epochs, shuffle_seed: seed, ..config.train.clone() }
}

/// Runs the algorithm with the model kind and training mode in `config`.
///
/// `model` supplies the frozen network for [`TrainingMode::FrozenCheckpoint`]
/// and optionally a pretrained one for [`TrainingMode::OfflineRandomPretrain`]
/// (otherwise pretraining happens here, outside the budget).
pub fn dsa_me_run<E: Evaluator + ?Sized>(
    config: &DsaMeConfig,
    problem: &Problem,
    ground_truth: &E,
    model: Option<SurrogateModel>,
) -> Result<RunResult> {
    dsa_me_run_observed(config, problem, ground_truth, model, |_, _| {})
}

/// As [`dsa_me_run`], calling `observer(outer_iteration, model)` with the
/// model the inner loop is about to use.
pub fn dsa_me_run_observed<E, F>(
    config: &DsaMeConfig,
    problem: &Problem,
    ground_truth: &E,
    model: Option<SurrogateModel>,
    mut observer: F,
) -> Result<RunResult>
where
    E: Evaluator + ?Sized,
    F: FnMut(usize, &SurrogateModel),
{
    config.validate()?;
    let Some(kind) = config.surrogate.model_kind() else {
        return plain_map_elites(config, problem, ground_truth);
    };
    let input_dim = problem.decks.cardset_size();
    let output_dim = config.output_dim();
    if config.use_ancillary && !ground_truth.has_ancillary() {
        return Err(Error::invalid("ancillary prediction needs an evaluator with ancillary data"));
    }

    let mut model = match (config.training_mode, model) {
        (TrainingMode::FrozenCheckpoint, None) => {
            return Err(Error::invalid("frozen-checkpoint mode needs a model"));
        }
        (TrainingMode::OfflineRandomPretrain, None) => {
            offline_pretrain(ground_truth, problem, config.offline_pretrain_count, config)?.0
        }
        (TrainingMode::Online | TrainingMode::FromScratchEachOuter, Some(_)) => {
            return Err(Error::invalid("online modes initialize their own model"));
        }
        (_, Some(m)) => m,
        (_, None) => initialize_model(kind, input_dim, output_dim, rng::derive_seed(config.seed, &[tag::INIT]))?,
    };
    if model.input_dim() != input_dim || model.output_dim() != output_dim {
        return Err(Error::invalid(format!(
            "model shape {:?} does not fit input {input_dim} / output {output_dim}",
            model.layer_sizes()
        )));
    }

    let mut archive = Archive::new(problem.measures);
    let mut buffer = DataBuffer::new();
    let mut history = Vec::new();
    let gt_seed = |i: usize| rng::derive_seed(config.seed, &[tag::GROUND_TRUTH, i as u64]);

    let mut init_rng = rng::derived_stream(config.seed, &[tag::GROUND_TRUTH]);
    let jobs: Vec<(DeckGenome, u64)> = (0..config.initial_population)
        .map(|i| (problem.decks.random_deck(&mut init_rng), gt_seed(i)))
        .collect();
    let results = evaluate_all(ground_truth, &jobs)?;
    let mut evals = 0;
    for ((genome, seed), r) in jobs.into_iter().zip(results) {
        buffer.push(sample_of(&genome, &r));
        archive.try_insert(ground_truth_elite(genome, r, seed))?;
        evals += 1;
    }
    history.push(snapshot(&archive, 0, evals, config.objective_floor, f64::NAN));

    let mut surrogate_archive: Option<Archive> = None;
    let mut outer = 0;
    while evals < config.evaluations {
        outer += 1;
        let train_seed = rng::derive_seed(config.seed, &[tag::TRAIN, outer as u64]);
        let loss = match config.training_mode {
            TrainingMode::Online => {
                let hist = model.train(&buffer, &train_config(config, train_seed, config.train.epochs))?;
                hist.last().copied().unwrap_or(f64::NAN)
            }
            TrainingMode::FromScratchEachOuter => {
                let init = rng::derive_seed(config.seed, &[tag::INIT, outer as u64]);
                model = initialize_model(kind, input_dim, output_dim, init)?;
                let hist = model.train(&buffer, &train_config(config, train_seed, config.train.epochs))?;
                hist.last().copied().unwrap_or(f64::NAN)
            }
            TrainingMode::OfflineRandomPretrain | TrainingMode::FrozenCheckpoint => f64::NAN,
        };
        observer(outer, &model);

        let mut inner_archive = match surrogate_archive.take() {
            Some(prev) if !config.reset_inner_archive => prev,
            _ => Archive::new(problem.measures),
        };
        let inner = MapElitesConfig {
            iterations: config.inner_iterations,
            // A kept archive continues by perturbation only.
            initial_population: if inner_archive.is_empty() { config.initial_population } else { 0 },
            batch_size: config.inner_batch_size,
            seed: rng::derive_seed(config.seed, &[tag::INNER, outer as u64]),
            metrics_stride: 0,
            qd_floor: 0.0,
        };
        map_elites_run(&SurrogateEvaluator { model: &model }, &mut inner_archive, &problem.decks, &inner)?;

        let jobs: Vec<(DeckGenome, u64)> = inner_archive
            .elites()
            .enumerate()
            .map(|(k, e)| (e.genome.clone(), gt_seed(evals + k)))
            .collect();
        if jobs.is_empty() {
            return Err(Error::invalid("inner loop produced an empty surrogate archive"));
        }
        let results = evaluate_all(ground_truth, &jobs)?;
        for ((genome, seed), r) in jobs.into_iter().zip(results) {
            buffer.push(sample_of(&genome, &r));
            archive.try_insert(ground_truth_elite(genome, r, seed))?;
            evals += 1;
        }
        history.push(snapshot(&archive, outer, evals, config.objective_floor, loss));
        surrogate_archive = Some(inner_archive);
    }

    Ok(RunResult {
        ground_truth_archive: archive,
        buffer,
        metrics_history: history,
        final_model: Some(model),
        last_surrogate_archive: surrogate_archive,
        evaluations_used: evals,
    })
}

/// MAP-Elites on the ground truth with `n := N`.
fn plain_map_elites<E: Evaluator + ?Sized>(config: &DsaMeConfig, problem: &Problem, ground_truth: &E) -> Result<RunResult> {
    let me = plain_map_elites_config(config);
    let mut archive = Archive::new(problem.measures);
    let mut buffer = DataBuffer::new();
    let log = map_elites_run_with(ground_truth, &mut archive, &problem.decks, &me, |g, r, _| buffer.push(sample_of(g, r)))?;
    // Re-derive per-stride snapshots from the buffer so the history carries
    // the same columns as the surrogate variants.
    let mut replay = Archive::new(problem.measures);
    let mut history = Vec::new();
    for (k, s) in buffer.samples().iter().enumerate() {
        replay.try_insert(Elite {
            genome: DeckGenome::parse_counts(&s.x.iter().map(|v| (*v as u32).to_string()).collect::<Vec<_>>().join(","))?,
            objective: s.f,
            measures: s.m,
            ancillary: s.alpha,
            source: EliteSource::GroundTruth,
            eval_seed: 0,
        })?;
        let n = k + 1;
        if n % config.initial_population == 0 || n == buffer.len() {
            history.push(snapshot(&replay, n.div_ceil(config.initial_population) - 1, n, config.objective_floor, f64::NAN));
        }
    }
    Ok(RunResult {
        ground_truth_archive: archive,
        buffer,
        metrics_history: history,
        final_model: None,
        last_surrogate_archive: None,
        evaluations_used: log.evaluations,
    })
}

/// The inner-loop configuration the no-surrogate baseline runs with.
pub fn plain_map_elites_config(config: &DsaMeConfig) -> MapElitesConfig {
    MapElitesConfig {
        iterations: config.evaluations,
        initial_population: config.initial_population,
        batch_size: config.inner_batch_size,
        seed: config.seed,
        metrics_stride: 0,
        qd_floor: config.objective_floor,
    }
}

/// Evaluates `count` random decks and trains a fresh model on them for
/// `epochs * pretrain_repetitions` epochs. These evaluations sit outside the
/// online budget.
pub fn offline_pretrain<E: Evaluator + ?Sized>(
    ground_truth: &E,
    problem: &Problem,
    count: usize,
    config: &DsaMeConfig,
) -> Result<(SurrogateModel, DataBuffer)> {
    if count == 0 {
        return Err(Error::invalid("pretraining needs at least one deck"));
    }
    let kind = config
        .surrogate
        .model_kind()
        .ok_or_else(|| Error::invalid("pretraining needs a surrogate model kind"))?;
    let mut deck_rng = rng::derived_stream(config.seed, &[tag::PRETRAIN]);
    let jobs: Vec<(DeckGenome, u64)> = (0..count)
        .map(|i| {
            (problem.decks.random_deck(&mut deck_rng), rng::derive_seed(config.seed, &[tag::PRETRAIN, i as u64]))
        })
        .collect();
    let results = evaluate_all(ground_truth, &jobs)?;
    let mut buffer = DataBuffer::new();
    for ((g, _), r) in jobs.iter().zip(&results) {
        buffer.push(sample_of(g, r));
    }
    let init = rng::derive_seed(config.seed, &[tag::PRETRAIN, tag::INIT]);
    let mut model = initialize_model(kind, problem.decks.cardset_size(), config.output_dim(), init)?;
    let epochs = config.train.epochs * config.pretrain_repetitions.max(1);
    model.train(&buffer, &train_config(config, rng::derive_seed(init, &[tag::TRAIN]), epochs))?;
    Ok((model, buffer))
}

/// A fresh model trained from scratch on a completed run's buffer.
pub fn elite_data_retrain(buffer: &DataBuffer, config: &DsaMeConfig, seed: u64) -> Result<SurrogateModel> {
    let first = buffer
        .samples()
        .first()
        .ok_or_else(|| Error::invalid("cannot retrain on an empty buffer"))?;
    let kind = config
        .surrogate
        .model_kind()
        .ok_or_else(|| Error::invalid("retraining needs a surrogate model kind"))?;
    let mut model = initialize_model(kind, first.x.len(), config.output_dim(), rng::derive_seed(seed, &[tag::INIT]))?;
    let epochs = config.train.epochs * config.pretrain_repetitions.max(1);
    model.train(buffer, &train_config(config, rng::derive_seed(seed, &[tag::TRAIN]), epochs))?;
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetentionReport {
    /// Filled cells of the ground-truth archive over elites evaluated.
    pub retained_fraction: f64,
    /// Elites whose ground-truth cell equals their surrogate cell.
    pub exact_cell_fraction: f64,
    pub mean_manhattan_distance: f64,
    pub evaluated: usize,
}

impl RetentionReport {
    pub fn to_text(&self) -> String {
        format!(
            "evaluated={}\nretained_fraction={}\nexact_cell_fraction={}\nmean_manhattan_distance={}\n",
            self.evaluated, self.retained_fraction, self.exact_cell_fraction, self.mean_manhattan_distance
        )
    }
}

/// Re-evaluates every surrogate elite on the ground truth (with the elite's
/// own evaluation seed) and places the results in a fresh archive.
pub fn retention_analysis<E: Evaluator + ?Sized>(
    surrogate_archive: &Archive,
    ground_truth: &E,
    target_space: &MeasureSpace,
) -> Result<(Archive, RetentionReport)> {
    if surrogate_archive.is_empty() {
        return Err(Error::EmptyArchive);
    }
    let cells: Vec<_> = surrogate_archive.iter().map(|(c, _)| *c).collect();
    let jobs: Vec<(DeckGenome, u64)> = surrogate_archive.elites().map(|e| (e.genome.clone(), e.eval_seed)).collect();
    let results = evaluate_all(ground_truth, &jobs)?;
    let mut fresh = Archive::new(*target_space);
    let (mut exact, mut dist) = (0usize, 0usize);
    for ((cell, (genome, seed)), r) in cells.iter().zip(jobs).zip(results) {
        let gt_cell = cell_of(target_space, r.m)?;
        if gt_cell == *cell {
            exact += 1;
        }
        dist += gt_cell.manhattan(cell);
        fresh.try_insert(ground_truth_elite(genome, r, seed))?;
    }
    let n = cells.len() as f64;
    let report = RetentionReport {
        retained_fraction: fresh.len() as f64 / n,
        exact_cell_fraction: exact as f64 / n,
        mean_manhattan_distance: dist as f64 / n,
        evaluated: cells.len(),
    };
    Ok((fresh, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archive::MeasureDim;
    use crate::deck::{generate_cardset, DeckConstraints};
    use crate::qd::tests::ToyEvaluator;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn problem() -> Problem {
        Problem {
            decks: DeckSpace::new(generate_cardset(1, 20).unwrap(), DeckConstraints::default(), 0.5).unwrap(),
            measures: MeasureSpace::new([
                MeasureDim { lower: 0.0, upper: 1.0, resolution: 5 },
                MeasureDim { lower: 0.0, upper: 1.0, resolution: 5 },
            ])
            .unwrap(),
        }
    }

    fn small(surrogate: SurrogateKind) -> DsaMeConfig {
        DsaMeConfig {
            evaluations: 120,
            inner_iterations: 300,
            initial_population: 20,
            surrogate,
            train: TrainConfig { epochs: 3, ..TrainConfig::default() },
            seed: 5,
            ..DsaMeConfig::default()
        }
    }

    #[test]
    fn budget_equal_to_g_is_random_phase_only() {
        let cfg = DsaMeConfig { evaluations: 20, ..small(SurrogateKind::Mlp) };
        let mut trained = 0;
        let r = dsa_me_run_observed(&cfg, &problem(), &ToyEvaluator::new(), None, |_, _| trained += 1).unwrap();
        assert_eq!(trained, 0);
        assert_eq!(r.evaluations_used, 20);
        assert_eq!(r.buffer.len(), 20);
        assert_eq!(r.metrics_history.len(), 1);
    }

    #[test]
    fn accounting_and_sources() {
        let cfg = small(SurrogateKind::Mlp);
        let toy = ToyEvaluator::new();
        let mut sizes = Vec::new();
        let r = dsa_me_run_observed(&cfg, &problem(), &toy, None, |_, _| {}).unwrap();
        assert_eq!(toy.calls.load(Ordering::Relaxed), r.evaluations_used);
        let last = r.last_surrogate_archive.as_ref().unwrap();
        assert!(r.evaluations_used >= cfg.evaluations);
        assert!(r.evaluations_used < cfg.evaluations + last.len());
        assert_eq!(r.buffer.len(), r.evaluations_used);
        assert!(r.ground_truth_archive.elites().all(|e| e.source == EliteSource::GroundTruth));
        assert!(last.elites().all(|e| e.source == EliteSource::Surrogate));
        for w in r.metrics_history.windows(2) {
            assert!(w[1].coverage >= w[0].coverage);
            assert!(w[1].qd_score_floored >= w[0].qd_score_floored);
            sizes.push(w[1].evaluations_used - w[0].evaluations_used);
        }
        assert!(!sizes.is_empty());
    }

    #[test]
    fn no_surrogate_matches_plain_map_elites() {
        let cfg = small(SurrogateKind::None);
        let p = problem();
        let r = dsa_me_run(&cfg, &p, &ToyEvaluator::new(), None).unwrap();
        let mut direct = Archive::new(p.measures);
        map_elites_run(&ToyEvaluator::new(), &mut direct, &p.decks, &plain_map_elites_config(&cfg)).unwrap();
        assert_eq!(r.ground_truth_archive.to_csv(), direct.to_csv());
        assert_eq!(r.evaluations_used, 120);
        assert_eq!(r.metrics_history.last().unwrap().coverage, direct.coverage());
    }

    #[test]
    fn reset_controls_inner_archive_reuse() {
        let p = problem();
        let toy = ToyEvaluator::new();
        let count = AtomicUsize::new(0);
        let cfg = DsaMeConfig { reset_inner_archive: false, ..small(SurrogateKind::Linear) };
        let r = dsa_me_run_observed(&cfg, &p, &toy, None, |_, _| {
            count.fetch_add(1, Ordering::Relaxed);
        })
        .unwrap();
        assert!(count.load(Ordering::Relaxed) >= 2);
        assert!(r.last_surrogate_archive.is_some());
    }

    #[test]
    fn runs_are_deterministic() {
        let p = problem();
        let cfg = small(SurrogateKind::Mlp);
        let a = dsa_me_run(&cfg, &p, &ToyEvaluator::new(), None).unwrap();
        let b = dsa_me_run(&cfg, &p, &ToyEvaluator::new(), None).unwrap();
        assert_eq!(a.ground_truth_archive.to_csv(), b.ground_truth_archive.to_csv());
        assert_eq!(a.buffer.to_csv(), b.buffer.to_csv());
        assert_eq!(a.metrics_csv(), b.metrics_csv());
    }

    #[test]
    fn frozen_mode_needs_matching_model() {
        let p = problem();
        let cfg = DsaMeConfig { training_mode: TrainingMode::FrozenCheckpoint, ..small(SurrogateKind::Mlp) };
        assert!(dsa_me_run(&cfg, &p, &ToyEvaluator::new(), None).is_err());
        let wrong = initialize_model(ModelKind::Mlp, 7, 3, 1).unwrap();
        assert!(dsa_me_run(&cfg, &p, &ToyEvaluator::new(), Some(wrong)).is_err());
        let ok = initialize_model(ModelKind::Mlp, 20, 3, 1).unwrap();
        let r = dsa_me_run(&cfg, &p, &ToyEvaluator::new(), Some(ok.clone())).unwrap();
        assert_eq!(r.final_model.unwrap(), ok);
    }

    #[test]
    fn pretraining_is_seeded_and_sized() {
        let p = problem();
        let cfg = small(SurrogateKind::Mlp);
        let (m1, b1) = offline_pretrain(&ToyEvaluator::new(), &p, 30, &cfg).unwrap();
        let (m2, _) = offline_pretrain(&ToyEvaluator::new(), &p, 30, &cfg).unwrap();
        assert_eq!(b1.len(), 30);
        assert_eq!(m1.to_checkpoint_bytes(), m2.to_checkpoint_bytes());
        assert!(offline_pretrain(&ToyEvaluator::new(), &p, 0, &cfg).is_err());

    }

    #[test]
    fn perfect_surrogate_retention_is_exact() {
        let p = problem();
        let perfect = PerfectSurrogate(ToyEvaluator::new());
        let mut sur = Archive::new(p.measures);
        let cfg = MapElitesConfig { iterations: 300, initial_population: 30, seed: 2, ..MapElitesConfig::default() };
        map_elites_run(&perfect, &mut sur, &p.decks, &cfg).unwrap();
        let (fresh, rep) = retention_analysis(&sur, &ToyEvaluator::new(), &p.measures).unwrap();
        assert_eq!(rep.exact_cell_fraction, 1.0);
        assert_eq!(rep.mean_manhattan_distance, 0.0);
        assert_eq!(rep.retained_fraction, 1.0);
        assert_eq!(fresh.len(), sur.len());
        assert!(retention_analysis(&Archive::new(p.measures), &ToyEvaluator::new(), &p.measures).is_err());
    }

    #[test]
    fn colliding_elites_halve_retention() {
        // Two surrogate cells whose decks both land in one ground-truth cell.
        let p = problem();
        let mut sur = Archive::new(p.measures);
        let mut rng = rng::stream(1);
        let toy = ToyEvaluator::new();
        let mut placed = 0;
        let mut target = None;
        while placed < 2 {
            let g = p.decks.random_deck(&mut rng);
            let r = toy.evaluate(&g, 0).unwrap();
            let c = cell_of(&p.measures, r.m).unwrap();
            if target.is_none() {
                target = Some(c);
            }
            if Some(c) == target {
                let m = [placed as f64 * 0.5 + 0.1, 0.9];
                sur.try_insert(Elite { genome: g, objective: 0.0, measures: m, ancillary: None, source: EliteSource::Surrogate, eval_seed: 0 }).unwrap();
                placed += 1;
            }
        }
        let (_, rep) = retention_analysis(&sur, &toy, &p.measures).unwrap();
        assert_eq!(rep.retained_fraction, 0.5);
    }

    #[test]
    fn elite_data_retrain_is_seeded() {
        let p = problem();
        let cfg = small(SurrogateKind::Mlp);
        let run = dsa_me_run(&cfg, &p, &ToyEvaluator::new(), None).unwrap();
        let a = elite_data_retrain(&run.buffer, &cfg, 3).unwrap();
        let b = elite_data_retrain(&run.buffer, &cfg, 3).unwrap();
        assert_eq!(a.to_checkpoint_bytes(), b.to_checkpoint_bytes());
        assert!(elite_data_retrain(&DataBuffer::new(), &cfg, 3).is_err());
    }

    #[test]
    fn save_writes_run_directory() {
        let dir = tempfile::tempdir().unwrap();
        let run = dsa_me_run(&small(SurrogateKind::Linear), &problem(), &ToyEvaluator::new(), None).unwrap();
        run.save(dir.path(), "dsa_me.seed=5\n").unwrap();
        for f in ["archive.csv", "buffer.csv", "metrics.csv", "model.ckpt", "config.txt"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let text = std::fs::read_to_string(dir.path().join("archive.csv")).unwrap();
        let back = Archive::from_csv(problem().measures, &text, EliteSource::GroundTruth).unwrap();
        assert_eq!(back.qd_score(-30.0), run.ground_truth_archive.qd_score(-30.0));
        let model = SurrogateModel::load_checkpoint(&dir.path().join("model.ckpt")).unwrap();
        assert_eq!(model.parameters(), run.final_model.unwrap().parameters());
    }
}
