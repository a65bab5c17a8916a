//! Generic MAP-Elites over any [`Evaluator`].

use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;

use crate::archive::{Archive, Elite, EliteSource};
use crate::deck::{DeckGenome, DeckSpace};
use crate::rng::{self, tag};
use crate::surrogate::AncillaryData;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvaluationResult {
    pub f: f64,
    pub m: [f64; 2],
    pub alpha: Option<AncillaryData>,
}

impl EvaluationResult {
    fn check(&self) -> Result<()> {
        if self.f.is_finite() && self.m.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::invalid(format!("non-finite evaluation {self:?}")))
        }
    }
}

/// Something that scores a deck. Must be deterministic in `(genome, seed)`.
pub trait Evaluator: Sync {
    fn evaluate(&self, genome: &DeckGenome, seed: u64) -> Result<EvaluationResult>;

    fn has_ancillary(&self) -> bool;

    fn source(&self) -> EliteSource {
        EliteSource::GroundTruth
    }

    /// Whether batches should be spread over a thread pool. Cheap evaluators
    /// run serially.
    fn parallel(&self) -> bool {
        true
    }
}

impl<E: Evaluator + ?Sized> Evaluator for &E {
    fn evaluate(&self, genome: &DeckGenome, seed: u64) -> Result<EvaluationResult> {
        (**self).evaluate(genome, seed)
    }

    fn has_ancillary(&self) -> bool {
        (**self).has_ancillary()
    }

    fn source(&self) -> EliteSource {
        (**self).source()
    }

    fn parallel(&self) -> bool {
        (**self).parallel()
    }
}

/// Evaluates and attaches the genome to any failure.
pub(crate) fn evaluate_checked<E: Evaluator + ?Sized>(
    evaluator: &E,
    genome: &DeckGenome,
    seed: u64,
) -> Result<EvaluationResult> {
    evaluator
        .evaluate(genome, seed)
        .and_then(|r| r.check().map(|_| r))
        .map_err(|e| match e {
            e @ Error::Evaluation { .. } => e,
            other => Error::Evaluation {
                genome: genome.to_string(),
                message: other.to_string(),
            },
        })
}

/// Evaluates a list of `(genome, seed)` jobs, in parallel when the evaluator
/// allows it. Results keep the input order.
pub(crate) fn evaluate_all<E: Evaluator + ?Sized>(
    evaluator: &E,
    jobs: &[(DeckGenome, u64)],
) -> Result<Vec<EvaluationResult>> {
    if evaluator.parallel() && jobs.len() > 1 {
        jobs.par_iter()
            .map(|(g, s)| evaluate_checked(evaluator, g, *s))
            .collect()
    } else {
        jobs.iter().map(|(g, s)| evaluate_checked(evaluator, g, *s)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapElitesConfig {
    /// Total candidates generated and evaluated.
    pub iterations: usize,
    /// Leading candidates drawn at random instead of by perturbation.
    pub initial_population: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Record metrics every `stride` candidates (0 disables the log).
    pub metrics_stride: usize,
    pub qd_floor: f64,
}

impl Default for MapElitesConfig {
    fn default() -> Self {
        Self {
            iterations: 20_000,
            initial_population: 100,
            batch_size: 10,
            seed: 0,
            metrics_stride: 0,
            qd_floor: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub iteration: usize,
    pub coverage: f64,
    pub qd_score: f64,
    pub max_objective: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MapElitesLog {
    pub evaluations: usize,
    pub metrics: Vec<MetricsRow>,
}

impl MapElitesLog {
    /// CSV with header `iteration,coverage,qd_score,max_objective`.
    pub fn metrics_csv(&self) -> String {
        let mut out = String::from("iteration,coverage,qd_score,max_objective\n");
        for r in &self.metrics {
            let _ = writeln!(out, "{},{},{},{}", r.iteration, r.coverage, r.qd_score, r.max_objective);
        }
        out
    }
}

/// Uniform choice among the current elites.
pub fn select_parent<'a, R: Rng + ?Sized>(archive: &'a Archive, rng: &mut R) -> Result<&'a Elite> {
    if archive.is_empty() {
        return Err(Error::EmptyArchive);
    }
    let k = rng.gen_range(0..archive.len());
    Ok(archive.elites().nth(k).expect("index within archive length"))
}

pub fn candidate_seed(run_seed: u64, iteration: usize) -> u64 {
    rng::derive_seed(run_seed, &[tag::CANDIDATE, iteration as u64])
}

/// Runs MAP-Elites for `config.iterations` candidates, inserting into
/// `archive`.
///
/// The first `initial_population` candidates are random decks; the rest
/// perturb a uniformly selected elite. Candidates are produced in batches of
/// `batch_size` from the archive as it stood at the start of the batch
/// (batches never straddle the random/perturbation boundary), evaluated
/// (possibly in parallel) and inserted in iteration order.
pub fn map_elites_run<E: Evaluator + ?Sized>(
    evaluator: &E,
    archive: &mut Archive,
    space: &DeckSpace,
    config: &MapElitesConfig,
) -> Result<MapElitesLog> {
    map_elites_run_with(evaluator, archive, space, config, |_, _, _| {})
}

/// As [`map_elites_run`], calling `on_evaluated(genome, result, seed)` for
/// every candidate in iteration order.
pub fn map_elites_run_with<E, F>(
    evaluator: &E,
    archive: &mut Archive,
    space: &DeckSpace,
    config: &MapElitesConfig,
    mut on_evaluated: F,
) -> Result<MapElitesLog>
where
    E: Evaluator + ?Sized,
    F: FnMut(&DeckGenome, &EvaluationResult, u64),
{
    if config.batch_size == 0 {
        return Err(Error::invalid("batch size must be >= 1"));
    }
    let mut rng = rng::derived_stream(config.seed, &[tag::MAP_ELITES]);
    let mut log = MapElitesLog::default();
    let mut j = 0;
    while j < config.iterations {
        let boundary = if j < config.initial_population {
            config.initial_population
        } else {
            config.iterations
        };
        let end = (j + config.batch_size).min(boundary).min(config.iterations);
        let jobs = (j..end)
            .map(|it| {
                let genome = if it < config.initial_population {
                    space.random_deck(&mut rng)
                } else {
                    let parent = select_parent(archive, &mut rng)?;
                    let genome = parent.genome.clone();
                    space.perturb(&genome, &mut rng)
                };
                Ok((genome, candidate_seed(config.seed, it)))
            })
            .collect::<Result<Vec<_>>>()?;
        let results = evaluate_all(evaluator, &jobs)?;
        for (k, ((genome, seed), r)) in jobs.into_iter().zip(results).enumerate() {
            on_evaluated(&genome, &r, seed);
            archive.try_insert(Elite {
                genome,
                objective: r.f,
                measures: r.m,
                ancillary: r.alpha,
                source: evaluator.source(),
                eval_seed: seed,
            })?;
            log.evaluations += 1;
            let it = j + k + 1;
            if config.metrics_stride > 0 && (it % config.metrics_stride == 0 || it == config.iterations) {
                log.metrics.push(MetricsRow {
                    iteration: it,
                    coverage: archive.coverage(),
                    qd_score: archive.qd_score(config.qd_floor),
                    max_objective: archive.max_objective().unwrap_or(f64::NAN),
                });
            }
        }
        j = end;
    }
    Ok(log)
}
