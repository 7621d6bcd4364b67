//! Synthetic subpopulation-shift data and the Monte Carlo harness.
//!
//! Every random draw flows from a master seed through [`derive_seed`]; there
//! is no global RNG state.

mod report;
mod runner;
mod scenario;
mod theorem1;

pub use report::{aggregate, read_trials_csv, write_trials_csv, CoverageReport, EnvironmentMean, SummaryEntry, TRIALS_CSV_HEADER};
pub use runner::{environments, run_experiment, run_experiment_with, ExperimentConfig, Method, SweepConfig, TrialResult};
pub use scenario::ScenarioConfig;
pub use theorem1::{theorem1_scenario, Theorem1Report};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::classifiers::{FeatureVector, GaussianMixtureScenario};
use crate::error::{domain, Result};
use crate::simplex::ProbabilitySimplex;

pub type SimRng = ChaCha8Rng;

/// Seed for the `(a, b)`-th member of random stream `stream`.
pub fn derive_seed(master: u64, stream: u64, a: u64, b: u64) -> u64 {
    let mut h = splitmix(master ^ 0x5EED_0000_0000_0000);
    for word in [stream, a, b] {
        h = splitmix(h ^ word);
    }
    h
}

fn splitmix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn seeded_rng(seed: u64) -> SimRng {
    rand::SeedableRng::seed_from_u64(seed)
}

/// Mixture weights `lambda ~ Dirichlet(alpha_prime * 1_K)`.
///
/// Gamma variates are drawn in log space, `log G(a) = log G(a + 1) + log(U) / a`,
/// so tiny concentrations do not underflow every coordinate to zero.
pub fn sample_environment<R: Rng + ?Sized>(k: usize, alpha_prime: f64, rng: &mut R) -> Result<ProbabilitySimplex> {
    if k == 0 {
        return domain("environment needs at least one domain");
    }
    if !(alpha_prime > 0.0) || !alpha_prime.is_finite() {
        return domain(format!("Dirichlet concentration must be > 0, got {alpha_prime}"));
    }
    if k == 1 {
        return ProbabilitySimplex::new(vec![1.0]);
    }
    let boosted = Gamma::new(alpha_prime + 1.0, 1.0).map_err(|e| crate::Error::Domain(e.to_string()))?;
    let logs: Vec<f64> = (0..k)
        .map(|_| {
            let g: f64 = boosted.sample(rng);
            let u: f64 = 1.0 - rng.random::<f64>(); // (0, 1]
            g.ln() + u.ln() / alpha_prime
        })
        .collect();
    Ok(crate::classifiers::softmax_simplex(&logs))
}

/// One synthetic example: features, the score of its true label, and its
/// domain.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedPoint {
    pub features: FeatureVector,
    pub score: f64,
    pub domain: usize,
}

fn sample_point<R: Rng + ?Sized>(scenario: &GaussianMixtureScenario, k: usize, rng: &mut R) -> GroupedPoint {
    let sigma = scenario.feature_sigma;
    let coords = scenario.means[k]
        .as_slice()
        .iter()
        .map(|m| {
            let z: f64 = StandardNormal.sample(rng);
            m + sigma * z
        })
        .collect();
    GroupedPoint {
        features: FeatureVector::from_vec_unchecked(coords),
        score: scenario.score_laws[k].sample(rng),
        domain: k,
    }
}

fn sample_domain<R: Rng + ?Sized>(cumulative: &[f64], rng: &mut R) -> usize {
    let u = rng.random::<f64>() * cumulative[cumulative.len() - 1];
    cumulative
        .iter()
        .position(|&c| u < c)
        .unwrap_or(cumulative.len() - 1)
}

/// `n` draws from the mixture `sum_k lambda_k P_k`.
pub fn generate_grouped_data<R: Rng + ?Sized>(
    scenario: &GaussianMixtureScenario,
    lambda: &ProbabilitySimplex,
    n: usize,
    rng: &mut R,
) -> Result<Vec<GroupedPoint>> {
    scenario.validate()?;
    if n == 0 {
        return domain("sample size must be at least 1");
    }
    if lambda.len() != scenario.num_domains() {
        return Err(crate::Error::DimensionMismatch {
            expected: scenario.num_domains(),
            got: lambda.len(),
            context: "environment weights",
        });
    }
    let cumulative: Vec<f64> = lambda
        .as_slice()
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect();
    Ok((0..n)
        .map(|_| {
            let k = sample_domain(&cumulative, rng);
            sample_point(scenario, k, rng)
        })
        .collect())
}

/// `n` draws from domain `k` alone.
pub fn generate_domain_data<R: Rng + ?Sized>(
    scenario: &GaussianMixtureScenario,
    k: usize,
    n: usize,
    rng: &mut R,
) -> Result<Vec<GroupedPoint>> {
    if k >= scenario.num_domains() {
        return domain(format!("domain {k} out of range"));
    }
    Ok((0..n).map(|_| sample_point(scenario, k, rng)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::ScoreDistribution;

    fn scenario(k: usize) -> GaussianMixtureScenario {
        ScenarioConfig {
            num_domains: k,
            ..ScenarioConfig::default()
        }
        .build()
        .unwrap()
    }

    #[test]
    fn dirichlet_large_concentration_is_uniform() {
        let mut rng = seeded_rng(11);
        for _ in 0..1000 {
            let l = sample_environment(4, 1e9, &mut rng).unwrap();
            assert!(l.as_slice().iter().all(|w| (w - 0.25).abs() < 0.01));
        }
    }

    #[test]
    fn dirichlet_tiny_concentration_is_one_hot() {
        let mut rng = seeded_rng(12);
        let hot = (0..1000)
            .filter(|_| sample_environment(4, 1e-6, &mut rng).unwrap().argmax().1 > 0.999)
            .count();
        assert!(hot >= 990, "{hot}");
    }

    #[test]
    fn dirichlet_edge_cases() {
        let mut rng = seeded_rng(13);
        assert_eq!(sample_environment(1, 0.3, &mut rng).unwrap().as_slice(), &[1.0]);
        assert!(sample_environment(3, 0.0, &mut rng).is_err());
        assert!(sample_environment(0, 1.0, &mut rng).is_err());
    }

    #[test]
    fn dirichlet_mean_is_uniform() {
        let mut rng = seeded_rng(14);
        let mut mean = [0.0; 3];
        let n = 20_000;
        for _ in 0..n {
            let l = sample_environment(3, 0.5, &mut rng).unwrap();
            for (m, w) in mean.iter_mut().zip(l.as_slice()) {
                *m += w / n as f64;
            }
        }
        // Var(lambda_k) = (1/3)(2/3)/(1.5 + 1) ~ 0.089, sd of mean ~ 0.0021
        assert!(mean.iter().all(|m| (m - 1.0 / 3.0).abs() < 0.01), "{mean:?}");
    }

    #[test]
    fn one_hot_environment_yields_one_domain() {
        let s = scenario(3);
        let mut rng = seeded_rng(15);
        let pts = generate_grouped_data(&s, &ProbabilitySimplex::one_hot(3, 2).unwrap(), 500, &mut rng).unwrap();
        assert!(pts.iter().all(|p| p.domain == 2));
    }

    #[test]
    fn domain_frequencies_track_lambda() {
        let s = scenario(3);
        let lambda = ProbabilitySimplex::new(vec![0.2, 0.5, 0.3]).unwrap();
        let mut rng = seeded_rng(16);
        let n = 10_000;
        let pts = generate_grouped_data(&s, &lambda, n, &mut rng).unwrap();
        for k in 0..3 {
            let freq = pts.iter().filter(|p| p.domain == k).count() as f64 / n as f64;
            let sd = (lambda[k] * (1.0 - lambda[k]) / n as f64).sqrt();
            assert!((freq - lambda[k]).abs() < 3.0 * sd, "domain {k}: {freq}");
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let s = scenario(2);
        let l = ProbabilitySimplex::uniform(2).unwrap();
        let a = generate_grouped_data(&s, &l, 200, &mut seeded_rng(5)).unwrap();
        let b = generate_grouped_data(&s, &l, 200, &mut seeded_rng(5)).unwrap();
        assert_eq!(a, b);
        assert!(generate_grouped_data(&s, &l, 0, &mut seeded_rng(5)).is_err());
    }

    #[test]
    fn derived_seeds_differ() {
        let seeds: std::collections::HashSet<u64> = (0..100)
            .flat_map(|a| (0..10).map(move |b| derive_seed(7, 1, a, b)))
            .collect();
        assert_eq!(seeds.len(), 1000);
        assert_ne!(derive_seed(7, 1, 0, 0), derive_seed(7, 2, 0, 0));
    }

    #[test]
    fn uniform_scores_stay_in_support() {
        let law = ScoreDistribution::Uniform { low: 1.0, high: 2.0 };
        let mut rng = seeded_rng(17);
        assert!((0..1000).map(|_| law.sample(&mut rng)).all(|s| (1.0..2.0).contains(&s)));
    }
}
