//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use shiftcal::classifiers::{
    multiaccuracy_error, multicalibration_error, FeatureVector, GaussianPosteriorClassifier,
};
use shiftcal::conformal::{algorithm3_threshold, FlatCalibrationSet, Similarity, SimilarityWeighting};
use shiftcal::quantile::{group_weighted_threshold, standard_cp_threshold, GroupedCalibrationSet};
use shiftcal::scores::{
    aps_score, degree_matrix_score, lac_score, lns_score, mars_score, raps_score, EntailmentMatrix,
    ProbabilityVector, TokenLogProbSequence,
};
use shiftcal::simulation::{
    aggregate, generate_grouped_data, run_experiment, seeded_rng, theorem1_scenario, CoverageReport,
    ExperimentConfig, Method, ScenarioConfig, SweepConfig,
};
use shiftcal::ProbabilitySimplex;

/// Master seed shared by every Monte Carlo criterion, fixed up front.
const SEED: u64 = 20251015;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn timed<F: FnOnce() -> Outcome>(limit: Option<Duration>, f: F) -> Outcome {
    let start = Instant::now();
    let mut o = f();
    let took = start.elapsed();
    o.detail.push_str(&format!(" [{:.2}s", took.as_secs_f64()));
    if let Some(limit) = limit {
        o.detail.push_str(&format!(", limit {}s", limit.as_secs()));
        o.pass &= took <= limit;
    }
    o.detail.push(']');
    o
}

// Independent brute force: scan ascending candidates, count by linear scan.
fn brute_force_threshold(groups: &[Vec<f64>], lambda: &[f64], alpha: f64) -> f64 {
    let mut candidates: Vec<f64> = groups.iter().flatten().copied().collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    for q in candidates {
        let mut total = 0.0;
        for (k, g) in groups.iter().enumerate() {
            let m = g.iter().filter(|&&s| s <= q).count();
            total += lambda[k] * m as f64 / (g.len() + 1) as f64;
        }
        if total >= 1.0 - alpha {
            return q;
        }
    }
    f64::INFINITY
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 1);
    let instances = 10_000;
    let mut exact = 0;
    for _ in 0..instances {
        let k = rng.random_range(1..=5);
        let groups: Vec<Vec<f64>> = (0..k)
            .map(|_| {
                let n = rng.random_range(1..=20);
                let coarse = rng.random_bool(0.5);
                (0..n)
                    .map(|_| {
                        let u: f64 = rng.random();
                        if coarse { (u * 8.0).floor() / 8.0 } else { u }
                    })
                    .collect()
            })
            .collect();
        let raw: Vec<f64> = (0..k)
            .map(|_| if rng.random_bool(0.2) { 0.0 } else { -rng.random::<f64>().ln() })
            .collect();
        let raw = if raw.iter().all(|&w| w == 0.0) { vec![1.0; k] } else { raw };
        let lambda = ProbabilitySimplex::normalized(raw).unwrap();
        let alpha = rng.random_range(0.01..0.99);
        let cal = GroupedCalibrationSet::new(groups.clone()).unwrap();
        let got = group_weighted_threshold(&cal, &lambda, alpha).unwrap().threshold();
        let want = brute_force_threshold(&groups, lambda.as_slice(), alpha);
        if got.to_bits() == want.to_bits() {
            exact += 1;
        }
    }
    outcome(
        exact == instances,
        format!("group-weighted threshold vs brute force: {exact}/{instances} exact"),
    )
}

fn criterion_2() -> Outcome {
    let cfg = ExperimentConfig {
        seed: SEED,
        alphas: vec![0.1],
        methods: vec![Method::Unweighted],
        scenario: ScenarioConfig {
            num_domains: 1,
            ..Default::default()
        },
        sweep: SweepConfig {
            environments: 1,
            splits: 1000,
            n_cal: 1000,
            n_test: 2000,
            fixed_lambda: Some(vec![1.0]),
            ..Default::default()
        },
        ..Default::default()
    };
    let trials = run_experiment(&cfg).unwrap();
    let mean = trials.iter().map(|t| t.coverage).sum::<f64>() / trials.len() as f64;
    outcome(
        (0.899..=0.903).contains(&mean) && trials.len() == 1000,
        format!("exchangeable baseline: mean coverage {mean:.5} over {} trials, want [0.899, 0.903]", trials.len()),
    )
}

fn shift_sweep() -> CoverageReport {
    let cfg = ExperimentConfig {
        seed: SEED,
        alphas: vec![0.1],
        methods: vec![Method::Unweighted, Method::Max, Method::Oracle, Method::A1, Method::A2],
        scenario: ScenarioConfig {
            num_domains: 4,
            score_means: Some(vec![0.2, 0.4, 0.6, 0.8]),
            ..Default::default()
        },
        sweep: SweepConfig {
            environments: 100,
            splits: 15,
            n_cal: 500,
            n_test: 2000,
            dirichlet_alpha: 0.1,
            fixed_lambda: None,
        },
        ..Default::default()
    };
    aggregate(&run_experiment(&cfg).unwrap()).unwrap()
}

fn criterion_3(report: &CoverageReport) -> Outcome {
    let oracle = report.entry(Method::Oracle, 0.1).unwrap();
    let unweighted = report.entry(Method::Unweighted, 0.1).unwrap();
    let a1 = report.entry(Method::A1, 0.1).unwrap();
    let a2 = report.entry(Method::A2, 0.1).unwrap();
    let pass = oracle.min_env_coverage >= 0.89
        && (0.90..=0.93).contains(&oracle.mean_coverage)
        && oracle.std_coverage <= 0.5 * unweighted.std_coverage
        && report.environments == 100
        && report.splits == 15;
    outcome(
        pass,
        format!(
            "oracle under shift: min env {:.4} (>= 0.89), mean {:.4} (in [0.90, 0.93]), std {:.4} (<= {:.4}); a1 {:.4}±{:.4}, a2 {:.4}±{:.4}",
            oracle.min_env_coverage,
            oracle.mean_coverage,
            oracle.std_coverage,
            0.5 * unweighted.std_coverage,
            a1.mean_coverage,
            a1.std_coverage,
            a2.mean_coverage,
            a2.std_coverage,
        ),
    )
}

fn criterion_4(report: &CoverageReport) -> Outcome {
    let u = report.entry(Method::Unweighted, 0.1).unwrap();
    let below = u.per_environment.iter().filter(|e| e.coverage < 0.88).count();
    outcome(
        below >= 1,
        format!("unweighted under-covers: min env {:.4}, {below} environments below 0.88", u.min_env_coverage),
    )
}

fn criterion_5(report: &CoverageReport) -> Outcome {
    let max = report.entry(Method::Max, 0.1).unwrap().mean_coverage;
    let oracle = report.entry(Method::Oracle, 0.1).unwrap().mean_coverage;
    outcome(
        max >= oracle + 0.02,
        format!("max over-covers: max {max:.4} vs oracle {oracle:.4} + 0.02"),
    )
}

fn criterion_6() -> Outcome {
    let adv = theorem1_scenario(0.8, 0.1, 10_000, 10_000, &mut seeded_rng(SEED)).unwrap();
    let perfect = theorem1_scenario(1.0, 0.1, 10_000, 10_000, &mut seeded_rng(SEED + 1)).unwrap();
    let c = adv.domain_coverage[1];
    outcome(
        (0.60..=0.72).contains(&c) && perfect.overall_coverage >= 0.88,
        format!(
            "adversarial classifier: gamma 0.8 second-domain coverage {c:.4} (in [0.60, 0.72], bound {:.2}); gamma 1 coverage {:.4} (>= 0.88)",
            adv.bound, perfect.overall_coverage
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 7);
    let params = SimilarityWeighting {
        beta: 1.0,
        sigma: 1e12,
        similarity: Similarity::Cosine,
    };
    let mut exact = 0;
    for _ in 0..100 {
        let n = rng.random_range(1..=200);
        let d = rng.random_range(1..=6);
        let vec = |rng: &mut ChaCha8Rng| FeatureVector::new((0..d).map(|_| rng.random_range(-3.0..3.0)).collect()).unwrap();
        let scores: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let embeddings: Vec<FeatureVector> = (0..n).map(|_| vec(&mut rng)).collect();
        let x = vec(&mut rng);
        let alpha = rng.random_range(0.01..0.99);
        let cal = FlatCalibrationSet::new(scores.clone(), embeddings).unwrap();
        let got = algorithm3_threshold(&cal, &x, alpha, &params).unwrap().threshold();
        let want = standard_cp_threshold(&scores, alpha).unwrap().threshold();
        exact += usize::from(got.to_bits() == want.to_bits());
    }
    outcome(exact == 100, format!("similarity weighting, beta 1 and flat softmax: {exact}/100 equal to split CP"))
}

fn two_domain_scenario() -> ScenarioConfig {
    ScenarioConfig {
        num_domains: 2,
        separation: 6.0,
        feature_sigma: 1.0,
        ..Default::default()
    }
}

fn criterion_8() -> Outcome {
    let cfg = ExperimentConfig {
        seed: SEED,
        alphas: vec![0.05],
        methods: vec![Method::Unweighted, Method::A3],
        scenario: two_domain_scenario(),
        sweep: SweepConfig {
            environments: 100,
            splits: 3,
            n_cal: 500,
            n_test: 2000,
            dirichlet_alpha: 0.1,
            fixed_lambda: None,
        },
        algorithm3: SimilarityWeighting::default(),
        ..Default::default()
    };
    let report = aggregate(&run_experiment(&cfg).unwrap()).unwrap();
    let a3 = report.entry(Method::A3, 0.05).unwrap();
    let u = report.entry(Method::Unweighted, 0.05).unwrap();
    outcome(
        a3.std_coverage <= 0.8 * u.std_coverage && a3.mean_coverage >= 0.94,
        format!(
            "similarity weighting adapts: std {:.4} (<= 0.8 x unweighted {:.4} = {:.4}); mean {:.4} (>= 0.94)",
            a3.std_coverage,
            u.std_coverage,
            0.8 * u.std_coverage,
            a3.mean_coverage
        ),
    )
}

fn criterion_9() -> Outcome {
    let recalls = [0.80, 0.85, 0.90, 0.95];
    let cfg = ExperimentConfig {
        seed: SEED,
        alphas: recalls.iter().map(|r: &f64| 1.0 - r).collect(),
        methods: vec![Method::RiskUnweighted, Method::RiskSimilarity],
        scenario: two_domain_scenario(),
        sweep: SweepConfig {
            environments: 100,
            splits: 3,
            n_cal: 500,
            n_test: 2000,
            dirichlet_alpha: 0.5,
            fixed_lambda: None,
        },
        ..Default::default()
    };
    let report = aggregate(&run_experiment(&cfg).unwrap()).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for r in recalls {
        let e = report.entry(Method::RiskSimilarity, 1.0 - r).unwrap();
        let m = e.mean_recall.unwrap();
        pass &= m >= r - 0.02;
        parts.push(format!("r={r}: {m:.4}"));
    }
    let sim = report.entry(Method::RiskSimilarity, 1.0 - 0.9).unwrap().std_recall.unwrap();
    let uni = report.entry(Method::RiskUnweighted, 1.0 - 0.9).unwrap().std_recall.unwrap();
    pass &= sim <= uni;
    outcome(
        pass,
        format!("risk control recall: {}; std at r=0.9 {sim:.4} vs unweighted {uni:.4}", parts.join(", ")),
    )
}

fn criterion_10() -> Outcome {
    let tol = 1e-12;
    let pv = |v: &[f64]| ProbabilityVector::new(v.to_vec()).unwrap();
    let seq = |l: &[f64], w: Option<&[f64]>| TokenLogProbSequence::new(l.to_vec(), w.map(<[f64]>::to_vec)).unwrap();
    let mut checks: Vec<(&str, f64, f64)> = vec![
        ("lac (0.7,0.2,0.1)/0", lac_score(&pv(&[0.7, 0.2, 0.1]), 0).unwrap(), 0.3),
        ("lac (1,0)/0", lac_score(&pv(&[1.0, 0.0]), 0).unwrap(), 0.0),
        ("lac uniform4/3", lac_score(&pv(&[0.25; 4]), 3).unwrap(), 0.75),
        ("aps (0.5,0.3,0.2)/1", aps_score(&pv(&[0.5, 0.3, 0.2]), 1).unwrap(), 0.8),
        ("aps (0.5,0.3,0.2)/0", aps_score(&pv(&[0.5, 0.3, 0.2]), 0).unwrap(), 0.5),
        ("aps uniform4/2", aps_score(&pv(&[0.25; 4]), 2).unwrap(), 0.75),
        ("raps k=2", raps_score(&pv(&[0.5, 0.3, 0.2]), 1, 0.1, 1).unwrap(), 0.9),
        ("raps k=1", raps_score(&pv(&[0.5, 0.3, 0.2]), 0, 0.1, 1).unwrap(), 0.5),
        ("lns (-1,-2,-3)", lns_score(&seq(&[-1.0, -2.0, -3.0], None)).unwrap(), -2.0),
        ("lns (0)", lns_score(&seq(&[0.0], None)).unwrap(), 0.0),
        ("lns (-0.5,-0.5)", lns_score(&seq(&[-0.5, -0.5], None)).unwrap(), -0.5),
        ("mars uniform", mars_score(&seq(&[-1.0, -1.0], Some(&[0.5, 0.5]))).unwrap(), (-1.0f64).exp()),
        ("mars degenerate", mars_score(&seq(&[-2.0, -5.0], Some(&[1.0, 0.0]))).unwrap(), (-2.0f64).exp()),
        (
            "degree ones 2x2",
            degree_matrix_score(&EntailmentMatrix::new(vec![vec![1.0; 2]; 2]).unwrap()),
            0.0,
        ),
        (
            "degree identity 2x2",
            degree_matrix_score(&EntailmentMatrix::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap()),
            0.5,
        ),
        (
            "degree half 3x3",
            degree_matrix_score(
                &EntailmentMatrix::new(vec![vec![1.0, 0.5, 0.5], vec![0.5, 1.0, 0.5], vec![0.5, 0.5, 1.0]]).unwrap(),
            ),
            1.0 / 3.0,
        ),
    ];
    // identity cases on random inputs
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 10);
    for _ in 0..100 {
        let j = rng.random_range(2..=12);
        let raw: Vec<f64> = (0..j).map(|_| rng.random::<f64>() + 1e-3).collect();
        let total: f64 = raw.iter().sum();
        let p = ProbabilityVector::new(raw.iter().map(|x| x / total).collect()).unwrap();
        let label = rng.random_range(0..j);
        let b = rng.random_range(0..4);
        checks.push(("raps a=0", raps_score(&p, label, 0.0, b).unwrap(), aps_score(&p, label).unwrap()));
        let l = rng.random_range(1..=20);
        let lp: Vec<f64> = (0..l).map(|_| -3.0 * rng.random::<f64>()).collect();
        let w = vec![1.0 / l as f64; l];
        let lhs = mars_score(&seq(&lp, Some(&w))).unwrap();
        let rhs = lns_score(&seq(&lp, None)).unwrap().exp();
        checks.push(("mars uniform = exp lns", lhs, rhs));
    }
    let errors = [
        lac_score(&pv(&[0.5, 0.5]), 2).is_err(),
        aps_score(&pv(&[0.5, 0.5]), 2).is_err(),
        raps_score(&pv(&[0.5, 0.5]), 0, -0.1, 0).is_err(),
        TokenLogProbSequence::new(vec![], None).is_err(),
        mars_score(&seq(&[-1.0], None)).is_err(),
        EntailmentMatrix::new(vec![vec![1.0, 0.5]]).is_err(),
    ];
    let failed: Vec<&str> = checks.iter().filter(|(_, a, b)| (a - b).abs() > tol).map(|c| c.0).collect();
    let pass = failed.is_empty() && errors.iter().all(|&e| e);
    outcome(
        pass,
        format!(
            "score functions: {}/{} values within 1e-12, {}/{} error cases rejected{}",
            checks.len() - failed.len(),
            checks.len(),
            errors.iter().filter(|&&e| e).count(),
            errors.len(),
            if failed.is_empty() { String::new() } else { format!("; failed {failed:?}") }
        ),
    )
}

fn criterion_11() -> Outcome {
    let base = ScenarioConfig {
        num_domains: 3,
        separation: 2.0,
        ..Default::default()
    }
    .build()
    .unwrap();
    let lambda = ProbabilitySimplex::new(vec![0.5, 0.3, 0.2]).unwrap();
    let scenario = base.with_prior(lambda.clone()).unwrap();
    let oracle = GaussianPosteriorClassifier::oracle(&scenario).unwrap();
    let points = generate_grouped_data(&scenario, &lambda, 50_000, &mut seeded_rng(SEED)).unwrap();
    let sample: Vec<(FeatureVector, usize)> = points.into_iter().map(|p| (p.features, p.domain)).collect();
    let ma = multiaccuracy_error(&oracle, &sample).unwrap();
    let mc1 = multicalibration_error(&oracle, &sample, 1).unwrap();
    outcome(
        ma < 0.01 && (ma - mc1).abs() <= 1e-12,
        format!("diagnostics: oracle multiaccuracy {ma:.5} (< 0.01); bins=1 gap {:.1e}", (ma - mc1).abs()),
    )
}

fn criterion_12() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("sweep.toml");
    std::fs::write(
        &config,
        format!(
            "seed = {SEED}\nalphas = [0.05, 0.1]\nmethods = [\"unweighted\", \"oracle\", \"a3\", \"risk_similarity\"]\n\
             [sweep]\nenvironments = 3\nsplits = 2\nn_cal = 100\nn_test = 300\n"
        ),
    )
    .unwrap();
    let run = |out: &str| {
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_shiftcal"))
            .args(["sweep", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(dir.path().join(out))
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        std::fs::read(dir.path().join(out).join("trials.csv")).unwrap()
    };
    let a = run("a");
    let b = run("b");
    outcome(
        a == b && !a.is_empty(),
        format!("sweep determinism: two runs, {} bytes each, identical = {}", a.len(), a == b),
    )
}

fn main() {
    let minute = Duration::from_secs(60);
    let mut results: Vec<(u32, Outcome)> = Vec::new();
    results.push((1, timed(Some(Duration::from_secs(10)), criterion_1)));
    results.push((2, timed(Some(minute), criterion_2)));
    let start = Instant::now();
    let report = shift_sweep();
    let sweep_time = start.elapsed();
    for (i, f) in [(3, criterion_3 as fn(&CoverageReport) -> Outcome), (4, criterion_4), (5, criterion_5)] {
        let mut o = f(&report);
        o.detail.push_str(&format!(" [shared sweep {:.2}s, limit 600s]", sweep_time.as_secs_f64()));
        o.pass &= sweep_time <= 10 * minute;
        results.push((i, o));
    }
    results.push((6, timed(Some(Duration::from_secs(10)), criterion_6)));
    results.push((7, timed(None, criterion_7)));
    results.push((8, timed(None, criterion_8)));
    results.push((9, timed(None, criterion_9)));
    results.push((10, timed(None, criterion_10)));
    results.push((11, timed(None, criterion_11)));
    results.push((12, timed(None, criterion_12)));

    let mut failures = 0;
    for (i, o) in &results {
        println!("criterion {i:>2}: {}  {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failures += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failures} failed", results.len() - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
