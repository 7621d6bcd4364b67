use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{derive_seed, generate_domain_data, generate_grouped_data, sample_environment, seeded_rng, GroupedPoint, ScenarioConfig};
use crate::classifiers::{DomainClassifier, FeatureVector, GaussianMixtureScenario, GaussianPosteriorClassifier, ScoreDistribution};
use crate::conformal::{
    batch_mixture_estimate, risk_control_threshold_directed, similarity_point_masses, weighted_risk_control_threshold,
    FlatCalibrationSet, SimilarityWeighting,
};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::quantile::{
    group_weighted_threshold, max_threshold, standard_cp_threshold_directed, weighted_pointmass_quantile, Direction,
    GroupedCalibrationSet, ThresholdRule, WeightedPointMasses,
};
use crate::scores::ClassScoreSpec;
use crate::simplex::ProbabilitySimplex;

const STREAM_ENV: u64 = 1;
const STREAM_TRIAL: u64 = 2;

/// Calibration procedure evaluated by the sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Split conformal on the pooled calibration set.
    Unweighted,
    /// Largest per-domain threshold.
    Max,
    /// Per-point weighting with the Bayes posterior of the true environment.
    Oracle,
    /// Per-point weighting with the trained classifier.
    A1,
    /// Batch weighting with the trained classifier.
    A2,
    /// Similarity weighting on features, no domain labels.
    A3,
    /// Recall-targeted flagging, uniform weights. Target recall is `1 - alpha`.
    RiskUnweighted,
    /// Recall-targeted flagging with similarity weights.
    RiskSimilarity,
    /// Only produced by [`theorem1_scenario`](super::theorem1_scenario).
    Theorem1Adversarial,
}

impl Method {
    pub const SWEEPABLE: [Method; 8] = [
        Method::Unweighted,
        Method::Max,
        Method::Oracle,
        Method::A1,
        Method::A2,
        Method::A3,
        Method::RiskUnweighted,
        Method::RiskSimilarity,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Method::Unweighted => "unweighted",
            Method::Max => "max",
            Method::Oracle => "oracle",
            Method::A1 => "a1",
            Method::A2 => "a2",
            Method::A3 => "a3",
            Method::RiskUnweighted => "risk_unweighted",
            Method::RiskSimilarity => "risk_similarity",
            Method::Theorem1Adversarial => "theorem1_adversarial",
        }
    }

    pub fn is_risk(self) -> bool {
        matches!(self, Method::RiskUnweighted | Method::RiskSimilarity)
    }

    fn uses_similarity(self) -> bool {
        matches!(self, Method::A3 | Method::RiskSimilarity)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::SWEEPABLE
            .into_iter()
            .chain([Method::Theorem1Adversarial])
            .find(|m| m.tag() == s)
            .ok_or_else(|| Error::Domain(format!("unknown method `{s}`")))
    }
}

/// One (environment, split, method, alpha) cell of a sweep.
///
/// For risk-control methods the guaranteed quantity is recall, so `coverage`
/// holds the recall too and `mean_set_size` is absent. For per-point
/// methods `threshold` is the lower median of the per-point thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub env_id: usize,
    pub split_id: usize,
    pub method: Method,
    pub alpha: f64,
    pub coverage: f64,
    pub mean_set_size: Option<f64>,
    pub threshold: f64,
    pub recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub environments: usize,
    pub splits: usize,
    /// Calibration points per domain.
    pub n_cal: usize,
    /// Fresh test points per (environment, split).
    pub n_test: usize,
    pub dirichlet_alpha: f64,
    /// Use these mixture weights for every environment instead of sampling.
    pub fixed_lambda: Option<Vec<f64>>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            environments: 100,
            splits: 15,
            n_cal: 500,
            n_test: 2000,
            dirichlet_alpha: 0.1,
            fixed_lambda: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub format_version: u32,
    pub seed: u64,
    pub alphas: Vec<f64>,
    pub methods: Vec<Method>,
    /// Score orientation. Sweeps default to higher-is-less-conforming;
    /// `calibrate` insists on an explicit value.
    pub direction: Option<Direction>,
    /// Output directory for `sweep`; a `--out` flag overrides it.
    pub output: Option<PathBuf>,
    pub scenario: ScenarioConfig,
    pub sweep: SweepConfig,
    pub algorithm3: SimilarityWeighting,
    /// Score applied to probability-vector rows by `calibrate`.
    pub scores: ClassScoreSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            format_version: 1,
            seed: 0,
            alphas: vec![0.1],
            methods: vec![Method::Unweighted, Method::Max, Method::Oracle, Method::A1, Method::A2],
            direction: None,
            output: None,
            scenario: ScenarioConfig::default(),
            sweep: SweepConfig::default(),
            algorithm3: SimilarityWeighting::default(),
            scores: ClassScoreSpec::default(),
        }
    }
}

impl ExperimentConfig {
    pub const FORMAT_VERSION: u32 = 1;

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.format_version != Self::FORMAT_VERSION {
            return cfg(format!(
                "unsupported format_version {} (expected {})",
                self.format_version,
                Self::FORMAT_VERSION
            ));
        }
        self.scenario.validate()?;
        let s = &self.sweep;
        for (name, v) in [
            ("environments", s.environments),
            ("splits", s.splits),
            ("n_cal", s.n_cal),
            ("n_test", s.n_test),
        ] {
            if v == 0 {
                return cfg(format!("sweep.{name} must be >= 1"));
            }
        }
        if !(s.dirichlet_alpha > 0.0) || !s.dirichlet_alpha.is_finite() {
            return cfg(format!("sweep.dirichlet_alpha must be > 0, got {}", s.dirichlet_alpha));
        }
        if let Some(l) = &s.fixed_lambda {
            if l.len() != self.scenario.num_domains {
                return cfg(format!(
                    "sweep.fixed_lambda has {} weights for {} domains",
                    l.len(),
                    self.scenario.num_domains
                ));
            }
            ProbabilitySimplex::new(l.clone()).map_err(|e| Error::Config(format!("sweep.fixed_lambda: {e}")))?;
        }
        if self.alphas.is_empty() {
            return cfg("alphas must list at least one level".into());
        }
        for (i, &a) in self.alphas.iter().enumerate() {
            if !(a > 0.0 && a < 1.0) {
                return cfg(format!("alphas[{i}] = {a} is outside (0, 1)"));
            }
            if self.alphas[..i].contains(&a) {
                return cfg(format!("alpha {a} listed twice"));
            }
        }
        if self.methods.is_empty() {
            return cfg("methods must list at least one method".into());
        }
        for (i, &m) in self.methods.iter().enumerate() {
            if m == Method::Theorem1Adversarial {
                return cfg("theorem1_adversarial is only available through the theorem1 command".into());
            }
            if self.methods[..i].contains(&m) {
                return cfg(format!("method {m} listed twice"));
            }
        }
        self.algorithm3
            .validate()
            .map_err(|e| Error::Config(format!("algorithm3: {e}")))?;
        if self.methods.iter().any(|m| m.uses_similarity()) {
            let n = self.scenario.num_domains * s.n_cal;
            if self.algorithm3.kept(n) == 0 {
                return cfg("algorithm3 keeps no calibration points".into());
            }
        }
        Ok(())
    }
}

/// Mixture weights of every environment, in id order.
pub fn environments(config: &ExperimentConfig) -> Result<Vec<ProbabilitySimplex>> {
    let s = &config.sweep;
    (0..s.environments)
        .map(|e| match &s.fixed_lambda {
            Some(l) => ProbabilitySimplex::new(l.clone()),
            None => {
                let mut rng = seeded_rng(derive_seed(config.seed, STREAM_ENV, e as u64, 0));
                sample_environment(config.scenario.num_domains, s.dirichlet_alpha, &mut rng)
            }
        })
        .collect()
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<TrialResult>> {
    run_experiment_with(config, Execution::default())
}

/// Runs every (environment, split) trial. Output is ordered by environment,
/// split, then methods and alphas in config order, whatever the execution
/// mode.
pub fn run_experiment_with(config: &ExperimentConfig, exec: Execution) -> Result<Vec<TrialResult>> {
    config.validate()?;
    let scenario = config.scenario.build()?;
    let ctx = Context {
        trained: GaussianPosteriorClassifier::new(
            &scenario,
            &scenario.prior,
            config.scenario.classifier_temperature,
        )?,
        distractors: config.scenario.distractor_law()?,
        scenario,
        config,
    };
    let envs = environments(config)?;
    let trials: Vec<(usize, usize)> = (0..config.sweep.environments)
        .flat_map(|e| (0..config.sweep.splits).map(move |s| (e, s)))
        .collect();
    let per_trial = exec::try_map(&trials, exec, |&(e, s)| ctx.run_trial(e, s, &envs[e]))?;
    Ok(per_trial.into_iter().flatten().collect())
}

struct Context<'a> {
    config: &'a ExperimentConfig,
    scenario: GaussianMixtureScenario,
    trained: GaussianPosteriorClassifier,
    distractors: ScoreDistribution,
}

struct TestData {
    features: Vec<FeatureVector>,
    /// Raw true-label scores.
    scores: Vec<f64>,
    /// Raw wrong-label scores, `num_classes - 1` per point.
    distractors: Vec<Vec<f64>>,
}

impl Context<'_> {
    fn run_trial(&self, env: usize, split: usize, lambda: &ProbabilitySimplex) -> Result<Vec<TrialResult>> {
        let cfg = self.config;
        let dir = cfg.direction.unwrap_or_default();
        let mut rng = seeded_rng(derive_seed(cfg.seed, STREAM_TRIAL, env as u64, split as u64));

        let cal: Vec<Vec<GroupedPoint>> = (0..self.scenario.num_domains())
            .map(|k| generate_domain_data(&self.scenario, k, cfg.sweep.n_cal, &mut rng))
            .collect::<Result<_>>()?;
        let test_points = generate_grouped_data(&self.scenario, lambda, cfg.sweep.n_test, &mut rng)?;
        let wants_sets = cfg.methods.iter().any(|m| !m.is_risk());
        let extra = if wants_sets { cfg.scenario.num_classes - 1 } else { 0 };
        let test = TestData {
            distractors: test_points
                .iter()
                .map(|_| (0..extra).map(|_| dir.orient(self.distractors.sample(&mut rng))).collect())
                .collect(),
            scores: test_points.iter().map(|p| dir.orient(p.score)).collect(),
            features: test_points.into_iter().map(|p| p.features).collect(),
        };

        let groups: Vec<Vec<f64>> = cal
            .iter()
            .map(|g| g.iter().map(|p| dir.orient(p.score)).collect())
            .collect();
        let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
        let grouped = GroupedCalibrationSet::with_direction(groups, dir)?;

        let similarity_masses = if cfg.methods.iter().any(|m| m.uses_similarity()) {
            let flat = FlatCalibrationSet::with_direction(
                pooled.clone(),
                cal.iter().flatten().map(|p| p.features.clone()).collect(),
                dir,
            )?;
            Some(
                test.features
                    .iter()
                    .map(|x| similarity_point_masses(&flat, x, &cfg.algorithm3))
                    .collect::<Result<Vec<_>>>()?,
            )
        } else {
            None
        };

        let mut out = Vec::with_capacity(cfg.methods.len() * cfg.alphas.len());
        for &method in &cfg.methods {
            let per_point_weights = match method {
                Method::Oracle => {
                    let oracle = GaussianPosteriorClassifier::new(&self.scenario, lambda, 1.0)?;
                    Some(classify_all(&oracle, &test.features)?)
                }
                Method::A1 => Some(classify_all(&self.trained, &test.features)?),
                _ => None,
            };
            let batch_weights = match method {
                Method::A2 => Some(batch_mixture_estimate(&self.trained, &test.features)?),
                _ => None,
            };
            for &alpha in &cfg.alphas {
                let rules = match method {
                    Method::Unweighted => Rules::Shared(standard_cp_threshold_directed(&pooled, alpha, dir)?),
                    Method::Max => Rules::Shared(max_threshold(&grouped, alpha)?),
                    Method::Oracle | Method::A1 => Rules::PerPoint(
                        per_point_weights
                            .as_ref()
                            .expect("weights computed above")
                            .iter()
                            .map(|w| group_weighted_threshold(&grouped, w, alpha))
                            .collect::<Result<_>>()?,
                    ),
                    Method::A2 => Rules::Shared(group_weighted_threshold(
                        &grouped,
                        batch_weights.as_ref().expect("weights computed above"),
                        alpha,
                    )?),
                    Method::A3 => Rules::PerPoint(
                        masses(&similarity_masses)
                            .iter()
                            .map(|pm| Ok(ThresholdRule::new(weighted_pointmass_quantile(pm, 1.0 - alpha)?, dir)))
                            .collect::<Result<_>>()?,
                    ),
                    Method::RiskUnweighted => Rules::Shared(risk_control_threshold_directed(&pooled, 1.0 - alpha, dir)?),
                    Method::RiskSimilarity => Rules::PerPoint(
                        masses(&similarity_masses)
                            .iter()
                            .map(|pm| weighted_risk_control_threshold(pm, 1.0 - alpha, dir))
                            .collect::<Result<_>>()?,
                    ),
                    Method::Theorem1Adversarial => unreachable!("rejected by validation"),
                };
                out.push(evaluate(env, split, method, alpha, &rules, &test));
            }
        }
        Ok(out)
    }
}

fn masses(m: &Option<Vec<WeightedPointMasses>>) -> &[WeightedPointMasses] {
    m.as_deref().expect("similarity masses computed when a similarity method is requested")
}

fn classify_all<C: DomainClassifier<Input = FeatureVector>>(c: &C, xs: &[FeatureVector]) -> Result<Vec<ProbabilitySimplex>> {
    xs.iter().map(|x| c.classify(x)).collect()
}

pub(crate) enum Rules {
    Shared(ThresholdRule),
    PerPoint(Vec<ThresholdRule>),
}

impl Rules {
    fn get(&self, i: usize) -> &ThresholdRule {
        match self {
            Rules::Shared(r) => r,
            Rules::PerPoint(rs) => &rs[i],
        }
    }

    fn summary_threshold(&self) -> f64 {
        match self {
            Rules::Shared(r) => r.threshold(),
            Rules::PerPoint(rs) => {
                // median on the oriented scale so flipping the direction only flips the sign
                let mut oriented: Vec<f64> = rs.iter().map(ThresholdRule::oriented_threshold).collect();
                rs[0].direction().orient(lower_median(&mut oriented))
            }
        }
    }
}

/// Element at index `(n - 1) / 2` after sorting; never averages, so
/// infinite thresholds pass through intact.
pub(crate) fn lower_median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values[(values.len() - 1) / 2]
}

fn evaluate(env: usize, split: usize, method: Method, alpha: f64, rules: &Rules, test: &TestData) -> TrialResult {
    let n = test.scores.len();
    let threshold = rules.summary_threshold();
    if method.is_risk() {
        let flagged = (0..n).filter(|&i| !rules.get(i).contains(test.scores[i])).count();
        let recall = flagged as f64 / n as f64;
        return TrialResult {
            env_id: env,
            split_id: split,
            method,
            alpha,
            coverage: recall,
            mean_set_size: None,
            threshold,
            recall: Some(recall),
        };
    }
    let mut missed = 0usize;
    let mut set_total = 0usize;
    for i in 0..n {
        let rule = rules.get(i);
        let hit = rule.contains(test.scores[i]);
        missed += usize::from(!hit);
        set_total += usize::from(hit) + test.distractors[i].iter().filter(|&&s| rule.contains(s)).count();
    }
    TrialResult {
        env_id: env,
        split_id: split,
        method,
        alpha,
        coverage: 1.0 - missed as f64 / n as f64,
        mean_set_size: Some(set_total as f64 / n as f64),
        threshold,
        recall: None,
    }
}
