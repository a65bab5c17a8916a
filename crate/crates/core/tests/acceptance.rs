//! Acceptance checks, one PASS/FAIL line each. Runs with `harness = false`
//! and exits non-zero if any check fails.

use std::collections::BTreeMap;
use std::process::ExitCode;

use rand::Rng;

use dsame::archive::{cell_of, Archive, CellIndex, Elite, EliteSource, MeasureDim, MeasureSpace};
use dsame::deck::{encode_bag_of_cards, perturb_deck, random_deck, sample_k_geometric, DeckConstraints};
use dsame::dsa_me::{dsa_me_run_observed, retention_analysis, PerfectSurrogate, RunResult};
use dsame::experiment::{run_suite, trial_seed, SuiteOutcome, Variant};
use dsame::qd::{map_elites_run, Evaluator, MapElitesConfig};
use dsame::rng::{derive_seed, stream, tag};
use dsame::settings::Settings;
use dsame::sim::MiniCardEvaluator;
use dsame::surrogate::{
    finite_difference_check, initialize_model, AdamConfig, Gradients, LabeledSample, ModelKind, SurrogateModel,
};

struct Report {
    failed: usize,
}

impl Report {
    fn check(&mut self, id: u32, name: &str, ok: bool, detail: String) {
        if !ok {
            self.failed += 1;
        }
        println!("criterion {id:>2} {} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    }
}

fn floored(out: &SuiteOutcome, v: Variant) -> Vec<f64> {
    out.trial_metrics(v).unwrap().iter().map(|m| m.map_or(f64::NAN, |m| m.qd_score_floored)).collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Criteria 1, 2 and 10: the paired variant comparison.
fn variant_ordering(report: &mut Report, settings: &Settings, evaluator: &MiniCardEvaluator) {
    let mut s = settings.clone();
    s.experiment.variants = vec![Variant::MapElites, Variant::LsaMe, Variant::DsaMe, Variant::DsaMeNoReset];
    let dir = tempfile::tempdir().unwrap();
    let out = match run_suite(&s, evaluator, dir.path()) {
        Ok(o) => o,
        Err(e) => {
            for (id, name) in [(1, "dsa_me beats map_elites"), (2, "dsa_me vs lsa_me"), (10, "no-reset ablation")] {
                report.check(id, name, false, format!("suite error: {e}"));
            }
            return;
        }
    };
    let me = floored(&out, Variant::MapElites);
    let dsa = floored(&out, Variant::DsaMe);
    let lsa = floored(&out, Variant::LsaMe);
    let wins = dsa.iter().zip(&me).filter(|(d, m)| d > m).count();
    let cov = |v| out.row(v, "coverage").unwrap().mean;
    report.check(
        1,
        "dsa_me beats map_elites (floored QD >= 4/5 paired, mean coverage)",
        wins >= 4 && cov(Variant::DsaMe) > cov(Variant::MapElites),
        format!(
            "paired wins {wins}/{}; floored QD dsa_me {dsa:.1?} map_elites {me:.1?}; coverage {:.4} vs {:.4}",
            dsa.len(),
            cov(Variant::DsaMe),
            cov(Variant::MapElites)
        ),
    );
    report.check(
        2,
        "dsa_me mean floored QD >= lsa_me",
        mean(&dsa) >= mean(&lsa),
        format!("dsa_me {:.1} lsa_me {:.1}; lsa_me per trial {lsa:.1?}", mean(&dsa), mean(&lsa)),
    );
    let no_reset = out.trial_metrics(Variant::DsaMeNoReset).unwrap();
    let csv = out.summary_csv();
    report.check(
        10,
        "dsa_me_no_reset completes and is summarised",
        no_reset.iter().all(Option::is_some) && csv.contains("dsa_me_no_reset,qd_score_floored,"),
        format!(
            "{} of {} trials; mean floored QD {:.1}, coverage {:.4}",
            no_reset.iter().flatten().count(),
            no_reset.len(),
            mean(&floored(&out, Variant::DsaMeNoReset)),
            cov(Variant::DsaMeNoReset)
        ),
    );
}

fn gradient_check(report: &mut Report) {
    let mut rng = stream(31);
    let mut worst: f64 = 0.0;
    for k in 0..20u64 {
        let out = if k % 2 == 0 { 3 } else { 12 };
        let model = initialize_model(ModelKind::Mlp, 40, out, derive_seed(99, &[k])).unwrap();
        // A valid deck, and targets on the standardized scale the network fits.
        let x = encode_bag_of_cards(&random_deck(40, &DeckConstraints::default(), &mut rng));
        let alpha = (out == 12).then(|| {
            dsame::surrogate::AncillaryData::from_slice(&(0..9).map(|_| rng.gen_range(-2.0..2.0)).collect::<Vec<_>>())
                .unwrap()
        });
        let sample = LabeledSample { x, f: rng.gen_range(-2.0..2.0), m: [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)], alpha };
        worst = worst.max(finite_difference_check(&model, &sample, 1e-5).unwrap());
    }
    report.check(3, "finite differences on 20 MLPs (40->3, 40->12)", worst < 1e-4, format!("max relative error {worst:.3e}"));
}

fn adam_oracle(report: &mut Report) {
    // L(x) = 3 (x - 2)^2, gradient 6 (x - 2), starting at x = -1.
    let grad = |x: f64| 6.0 * (x - 2.0);
    let cfg = AdamConfig::default();
    let (mut x, mut m, mut v) = (-1.0f64, 0.0f64, 0.0f64);
    let mut model = SurrogateModel::from_parameters(ModelKind::Linear, &[1, 1], vec![(vec![0.0], vec![-1.0])]).unwrap();
    let mut worst: f64 = 0.0;
    for t in 1..=100 {
        let g = grad(x);
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        let m_hat = m / (1.0 - 0.9f64.powi(t));
        let v_hat = v / (1.0 - 0.999f64.powi(t));
        x -= 0.01 * m_hat / (v_hat.sqrt() + 1e-8);

        let b = model.parameters()[0].1[0];
        let grads = Gradients { layers: vec![(vec![0.0], vec![grad(b)])] };
        model.adam_step(&grads, &cfg).unwrap();
        worst = worst.max((model.parameters()[0].1[0] - x).abs());
    }
    report.check(4, "Adam matches scalar oracle over 100 steps", worst < 1e-12, format!("max abs error {worst:.3e}, x_100 = {x:.6}"));
}

fn archive_oracle(report: &mut Report) {
    let dim = MeasureDim { lower: 0.0, upper: 1.0, resolution: 5 };
    let space = MeasureSpace::new([dim, dim]).unwrap();
    let mut rng = stream(55);
    let mut archive = Archive::new(space);
    let mut best: BTreeMap<CellIndex, (f64, usize)> = BTreeMap::new();
    let (mut prev_cov, mut prev_qd) = (0.0, 0.0);
    let mut monotone = true;
    for id in 0..1000usize {
        let m = [rng.gen_range(-0.1..1.1), rng.gen_range(-0.1..1.1)];
        // Coarse objectives so that ties occur.
        let f = f64::from(rng.gen_range(-30..=30)) / 2.0;
        archive
            .try_insert(Elite {
                genome: dsame::deck::DeckGenome::parse_counts(&format!("{id},0")).unwrap(),
                objective: f,
                measures: m,
                ancillary: None,
                source: EliteSource::GroundTruth,
                eval_seed: id as u64,
            })
            .unwrap();
        let cell = cell_of(&space, m).unwrap();
        match best.get(&cell) {
            Some((b, _)) if *b >= f => {}
            _ => {
                best.insert(cell, (f, id));
            }
        }
        let (cov, qd) = (archive.coverage(), archive.qd_score(-30.0));
        monotone &= cov >= prev_cov && qd >= prev_qd;
        (prev_cov, prev_qd) = (cov, qd);
    }
    let equal = archive.len() == best.len()
        && archive.iter().all(|(c, e)| best.get(c).is_some_and(|(f, id)| *f == e.objective && *id as u64 == e.eval_seed));
    report.check(
        5,
        "archive equals brute-force argmax; traces non-decreasing",
        equal && monotone,
        format!("{} cells filled, oracle match {equal}, monotone {monotone}", archive.len()),
    );
}

fn genome_stress(report: &mut Report) {
    let c = DeckConstraints::default();
    let mut rng = stream(77);
    let mut violations = 0;
    let mut deck = random_deck(40, &c, &mut rng);
    for i in 0..100_000 {
        if i % 1000 == 0 {
            deck = random_deck(40, &c, &mut rng);
        }
        deck = perturb_deck(&deck, &c, 0.5, &mut rng).unwrap();
        if deck.check(&c).is_err() {
            violations += 1;
        }
    }
    let ones = (0..100_000).filter(|_| sample_k_geometric(&mut rng, 0.5, c.deck_size).unwrap() == 1).count();
    let p1 = ones as f64 / 1e5;
    report.check(
        6,
        "1e5 perturbations valid; P(k=1) = 0.5 +- 0.02",
        violations == 0 && (p1 - 0.5).abs() <= 0.02,
        format!("{violations} violations, P(k=1) = {p1:.4}"),
    );
}

/// Criteria 7, 8 and 9 share a full-scale online run.
fn single_run_checks(report: &mut Report, settings: &Settings, evaluator: &MiniCardEvaluator) {
    let problem = settings.problem().unwrap();
    let config = Variant::DsaMe.configure(&settings.run_config(trial_seed(settings.experiment.seed, 0)));

    let mut rng = stream(derive_seed(settings.experiment.seed, &[tag::HOLDOUT]));
    let holdout: Vec<LabeledSample> = (0..200u64)
        .map(|i| {
            let g = problem.decks.random_deck(&mut rng);
            let r = evaluator.evaluate(&g, derive_seed(settings.experiment.seed, &[tag::HOLDOUT, i])).unwrap();
            LabeledSample { x: encode_bag_of_cards(&g), f: r.f, m: r.m, alpha: r.alpha }
        })
        .collect();
    let mut mse = Vec::new();
    let run_a: RunResult =
        dsa_me_run_observed(&config, &problem, evaluator, None, |_, m| mse.push(m.measure_mse(&holdout).unwrap())).unwrap();
    let run_b = dsa_me_run_observed(&config, &problem, evaluator, None, |_, _| {}).unwrap();

    let same = [
        ("archive.csv", run_a.ground_truth_archive.to_csv() == run_b.ground_truth_archive.to_csv()),
        ("buffer.csv", run_a.buffer.to_csv() == run_b.buffer.to_csv()),
        ("metrics.csv", run_a.metrics_csv() == run_b.metrics_csv()),
    ];
    // Also through the files themselves.
    let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_a.save(da.path(), &settings.to_flat_text()).unwrap();
    run_b.save(db.path(), &settings.to_flat_text()).unwrap();
    let files_equal = ["archive.csv", "buffer.csv", "metrics.csv"]
        .iter()
        .all(|f| std::fs::read(da.path().join(f)).unwrap() == std::fs::read(db.path().join(f)).unwrap());
    report.check(
        7,
        "two identical runs give byte-identical archive, buffer, metrics",
        same.iter().all(|(_, ok)| *ok) && files_equal,
        format!("{same:?}, files equal {files_equal}, {} evaluations", run_a.evaluations_used),
    );

    let (first, last) = (mse[0], *mse.last().unwrap());
    report.check(
        8,
        "held-out measure MSE falls from first to last outer iteration",
        last < first,
        format!("{} outer iterations, MSE {first:.5} -> {last:.5}", mse.len()),
    );

    let surrogate_archive = run_a.last_surrogate_archive.as_ref().unwrap();
    let (_, rep) = retention_analysis(surrogate_archive, evaluator, &problem.measures).unwrap();
    let in_unit = |x: f64| (0.0..=1.0).contains(&x);
    let sane = rep.retained_fraction >= rep.exact_cell_fraction
        && in_unit(rep.retained_fraction)
        && in_unit(rep.exact_cell_fraction)
        && rep.mean_manhattan_distance.is_finite();
    let mut perfect_archive = Archive::new(problem.measures);
    let inner = MapElitesConfig {
        iterations: config.inner_iterations,
        initial_population: config.initial_population,
        batch_size: config.inner_batch_size,
        seed: derive_seed(config.seed, &[tag::INNER]),
        metrics_stride: 0,
        qd_floor: 0.0,
    };
    map_elites_run(&PerfectSurrogate(evaluator), &mut perfect_archive, &problem.decks, &inner).unwrap();
    let (_, perfect) = retention_analysis(&perfect_archive, evaluator, &problem.measures).unwrap();
    report.check(
        9,
        "retention sane; perfect surrogate retains exactly",
        sane && perfect.exact_cell_fraction == 1.0 && perfect.mean_manhattan_distance == 0.0,
        format!(
            "learned: retained {:.3} exact {:.3} distance {:.3} over {}; perfect: exact {} distance {}",
            rep.retained_fraction,
            rep.exact_cell_fraction,
            rep.mean_manhattan_distance,
            rep.evaluated,
            perfect.exact_cell_fraction,
            perfect.mean_manhattan_distance
        ),
    );
}

fn main() -> ExitCode {
    // Criterion-scale protocol: N = 1000, n = 20000, G = 100, 20 x 20, 5 trials.
    let settings = Settings::default();
    assert_eq!(
        (settings.dsa_me.evaluations, settings.dsa_me.inner_iterations, settings.map_elites.initial_population),
        (1000, 20_000, 100)
    );
    assert_eq!(settings.measure_space().unwrap().total_cells(), 400);
    assert_eq!(settings.experiment.trials, 5);
    let problem = settings.problem().unwrap();
    let evaluator = settings.evaluator(&problem).unwrap();

    let mut report = Report { failed: 0 };
    let started = std::time::Instant::now();
    variant_ordering(&mut report, &settings, &evaluator);
    gradient_check(&mut report);
    adam_oracle(&mut report);
    archive_oracle(&mut report);
    genome_stress(&mut report);
    single_run_checks(&mut report, &settings, &evaluator);
    println!("acceptance: {} failed, {:.1}s", report.failed, started.elapsed().as_secs_f64());
    if report.failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
