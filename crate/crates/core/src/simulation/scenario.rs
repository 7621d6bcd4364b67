use serde::{Deserialize, Serialize};

use crate::classifiers::{FeatureVector, GaussianMixtureScenario, ScoreDistribution};
use crate::error::{Error, Result};
use crate::simplex::ProbabilitySimplex;

/// Knobs of the synthetic Gaussian-mixture scenario.
///
/// Domain means sit at `±(separation / sqrt 2) e_j`, so any two means are at
/// least `separation` apart and up to `2 * feature_dim` domains fit.
/// Domain `k` scores are Beta with mean `score_means[k]` (default: evenly
/// spaced over `[0.1, 0.9]`) and `a + b = score_concentration`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub num_domains: usize,
    pub feature_dim: usize,
    pub separation: f64,
    pub feature_sigma: f64,
    pub score_means: Option<Vec<f64>>,
    pub score_concentration: f64,
    /// Labels per example; each test point gets `num_classes - 1` wrong-label
    /// scores used only for set sizes.
    pub num_classes: usize,
    pub distractor_mean: f64,
    pub distractor_concentration: f64,
    /// Temperature of the trained (uniform-prior) domain classifier.
    pub classifier_temperature: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            num_domains: 4,
            feature_dim: 8,
            separation: 6.0,
            feature_sigma: 1.0,
            score_means: None,
            score_concentration: 10.0,
            num_classes: 10,
            distractor_mean: 0.8,
            distractor_concentration: 10.0,
            classifier_temperature: 1.0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let k = self.num_domains;
        if k == 0 {
            return Err(Error::Config("scenario.num_domains must be >= 1".into()));
        }
        if self.feature_dim == 0 {
            return Err(Error::Config("scenario.feature_dim must be >= 1".into()));
        }
        if k > 2 * self.feature_dim {
            return Err(Error::Config(format!(
                "scenario.num_domains = {k} needs feature_dim >= {}",
                k.div_ceil(2)
            )));
        }
        for (name, v) in [
            ("separation", self.separation),
            ("feature_sigma", self.feature_sigma),
            ("score_concentration", self.score_concentration),
            ("distractor_concentration", self.distractor_concentration),
            ("classifier_temperature", self.classifier_temperature),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("scenario.{name} must be > 0, got {v}")));
            }
        }
        if self.num_classes == 0 {
            return Err(Error::Config("scenario.num_classes must be >= 1".into()));
        }
        if let Some(means) = &self.score_means {
            if means.len() != k {
                return Err(Error::Config(format!(
                    "scenario.score_means has {} entries for {k} domains",
                    means.len()
                )));
            }
        }
        for m in self.score_means().into_iter().chain([self.distractor_mean]) {
            if !(m > 0.0 && m < 1.0) {
                return Err(Error::Config(format!("score means must lie in (0, 1), got {m}")));
            }
        }
        Ok(())
    }

    pub fn score_means(&self) -> Vec<f64> {
        match &self.score_means {
            Some(m) => m.clone(),
            None if self.num_domains == 1 => vec![0.5],
            None => (0..self.num_domains)
                .map(|k| 0.1 + 0.8 * k as f64 / (self.num_domains - 1) as f64)
                .collect(),
        }
    }

    pub fn distractor_law(&self) -> Result<ScoreDistribution> {
        ScoreDistribution::beta_with_mean(self.distractor_mean, self.distractor_concentration)
    }

    /// The scenario with a uniform prior over domains.
    pub fn build(&self) -> Result<GaussianMixtureScenario> {
        self.validate()?;
        let d = self.feature_dim;
        let scale = self.separation / std::f64::consts::SQRT_2;
        let means = (0..self.num_domains)
            .map(|k| {
                let mut v = vec![0.0; d];
                if k < d {
                    v[k] = scale;
                } else {
                    v[k - d] = -scale;
                }
                FeatureVector::new(v)
            })
            .collect::<Result<Vec<_>>>()?;
        let laws = self
            .score_means()
            .into_iter()
            .map(|m| ScoreDistribution::beta_with_mean(m, self.score_concentration))
            .collect::<Result<Vec<_>>>()?;
        GaussianMixtureScenario::new(
            means,
            self.feature_sigma,
            laws,
            ProbabilitySimplex::uniform(self.num_domains)?,
        )
    }
}
