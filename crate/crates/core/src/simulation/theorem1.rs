use rand::Rng;
use serde::Serialize;

use super::runner::{lower_median, Method, TrialResult};
use crate::classifiers::{adversarial_gamma_classifier, ScoreDistribution, ScoredPoint};
use crate::error::{domain, Result};
use crate::quantile::{check_alpha, per_domain_thresholds, GroupedCalibrationSet};

/// Outcome of the two-domain adversarial construction.
///
/// Domain 0 scores are uniform on `[0, 1)`, domain 1 scores uniform on
/// `[1, 2]`. Each test point gets the exact split-conformal threshold of the
/// domain the classifier claims for it. `bound = max(0, gamma - alpha)` is
/// the coverage the construction guarantees not to exceed on domain 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Theorem1Report {
    pub gamma: f64,
    pub alpha: f64,
    pub n_cal: usize,
    pub n_test: usize,
    pub bound: f64,
    pub thresholds: [f64; 2],
    pub domain_counts: [usize; 2],
    pub domain_coverage: [f64; 2],
    pub classifier_accuracy: [f64; 2],
    pub overall_coverage: f64,
    pub trial: TrialResult,
}

pub fn theorem1_scenario<R: Rng + ?Sized>(
    gamma: f64,
    alpha: f64,
    n_cal: usize,
    n_test: usize,
    rng: &mut R,
) -> Result<Theorem1Report> {
    check_alpha(alpha)?;
    let classifier = adversarial_gamma_classifier(gamma, alpha, rng.random())?;
    if n_cal == 0 {
        return domain("n_cal must be at least 1");
    }
    if n_test < 2 {
        return domain("n_test must be at least 2 for a two-domain test mix");
    }
    let laws = [
        ScoreDistribution::Uniform { low: 0.0, high: 1.0 },
        ScoreDistribution::Uniform { low: 1.0, high: 2.0 },
    ];
    let groups: Vec<Vec<f64>> = laws
        .iter()
        .map(|law| (0..n_cal).map(|_| law.sample(rng)).collect())
        .collect();
    let cal = GroupedCalibrationSet::new(groups)?;
    let rules = per_domain_thresholds(&cal, alpha)?;

    let sizes = [n_test - n_test / 2, n_test / 2];
    let mut covered = [0usize; 2];
    let mut correct = [0usize; 2];
    let mut used = Vec::with_capacity(n_test);
    for (k, (&size, law)) in sizes.iter().zip(&laws).enumerate() {
        for _ in 0..size {
            let point = ScoredPoint {
                score: law.sample(rng),
                domain: k,
            };
            let claimed = classifier.predict(&point);
            correct[k] += usize::from(claimed == k);
            let rule = rules[claimed];
            covered[k] += usize::from(rule.contains(point.score));
            used.push(rule.threshold());
        }
    }

    let overall_coverage = 1.0 - (n_test - covered[0] - covered[1]) as f64 / n_test as f64;
    Ok(Theorem1Report {
        gamma,
        alpha,
        n_cal,
        n_test,
        bound: (gamma - alpha).max(0.0),
        thresholds: [rules[0].threshold(), rules[1].threshold()],
        domain_counts: sizes,
        domain_coverage: [0, 1].map(|k| covered[k] as f64 / sizes[k] as f64),
        classifier_accuracy: [0, 1].map(|k| correct[k] as f64 / sizes[k] as f64),
        overall_coverage,
        trial: TrialResult {
            env_id: 0,
            split_id: 0,
            method: Method::Theorem1Adversarial,
            alpha,
            coverage: overall_coverage,
            mean_set_size: None,
            threshold: lower_median(&mut used),
            recall: None,
        },
    })
}
