//! End-to-end calibration procedures.
//!
//! * per-test-point weighting: mixture weights from the domain classifier's
//!   output on the test input drive [`group_weighted_threshold`];
//! * batch weighting: the classifier's mean output over a test batch drives
//!   one shared threshold;
//! * similarity weighting: no domain labels; the calibration points most
//!   similar to the test embedding are kept and softmax-weighted;
//! * recall-targeted risk control for binary flagging, uniform or
//!   similarity-weighted.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::classifiers::{DomainClassifier, FeatureVector};
use crate::error::{domain, Error, Result};
use crate::quantile::{
    check_alpha, group_weighted_threshold, lower_conformal_rank, weighted_lower_quantile,
    weighted_pointmass_quantile, Direction, GroupedCalibrationSet, ThresholdRule,
    WeightedPointMasses,
};
use crate::simplex::ProbabilitySimplex;

/// Similarity measure between embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Similarity {
    #[default]
    Cosine,
    Dot,
    NegativeEuclidean,
}

impl Similarity {
    pub fn eval(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Similarity::Dot => dot(a, b),
            Similarity::Cosine => {
                let norms = dot(a, a).sqrt() * dot(b, b).sqrt();
                if norms == 0.0 {
                    0.0
                } else {
                    dot(a, b) / norms
                }
            }
            Similarity::NegativeEuclidean => {
                -a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
            }
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Knobs of similarity weighting: keep the top `beta` fraction of the
/// calibration set, weight by `softmax(similarity / sigma)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimilarityWeighting {
    pub beta: f64,
    pub sigma: f64,
    pub similarity: Similarity,
}

impl Default for SimilarityWeighting {
    fn default() -> Self {
        Self {
            beta: 0.1,
            sigma: 0.7,
            similarity: Similarity::Cosine,
        }
    }
}

impl SimilarityWeighting {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return domain(format!("beta must lie in (0, 1], got {}", self.beta));
        }
        if !(self.sigma > 0.0) || self.sigma.is_nan() {
            return domain(format!("sigma must be > 0, got {}", self.sigma));
        }
        Ok(())
    }

    /// `ceil(beta * n)`, at least one. The epsilon absorbs products such as
    /// `0.1 * 30 = 3.0000000000000004`.
    pub fn kept(&self, n: usize) -> usize {
        ((self.beta * n as f64 - 1e-9).ceil() as usize).clamp(1, n)
    }
}

/// Calibration scores with embeddings and no domain labels.
#[derive(Debug, Clone)]
pub struct FlatCalibrationSet {
    scores: Vec<f64>,
    embeddings: Vec<FeatureVector>,
    direction: Direction,
}

impl FlatCalibrationSet {
    pub fn new(scores: Vec<f64>, embeddings: Vec<FeatureVector>) -> Result<Self> {
        Self::with_direction(scores, embeddings, Direction::default())
    }

    pub fn with_direction(
        scores: Vec<f64>,
        embeddings: Vec<FeatureVector>,
        direction: Direction,
    ) -> Result<Self> {
        if scores.is_empty() {
            return domain("calibration set must be non-empty");
        }
        if scores.len() != embeddings.len() {
            return Err(Error::DimensionMismatch {
                expected: scores.len(),
                got: embeddings.len(),
                context: "calibration embeddings",
            });
        }
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return domain(format!("calibration score {i} is not finite"));
        }
        let d = embeddings[0].dim();
        if embeddings.iter().any(|e| e.dim() != d) {
            return domain("calibration embeddings must share one dimension");
        }
        Ok(Self {
            scores: scores.into_iter().map(|s| direction.orient(s)).collect(),
            embeddings,
            direction,
        })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn embedding_dim(&self) -> usize {
        self.embeddings[0].dim()
    }
}

/// Indices of the `keep` largest similarities, ties to the lower index.
pub fn top_similar(similarities: &[f64], keep: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..similarities.len()).collect();
    let order = |a: &usize, b: &usize| {
        similarities[*b]
            .total_cmp(&similarities[*a])
            .then_with(|| a.cmp(b))
    };
    if keep < idx.len() {
        idx.select_nth_unstable_by(keep, order);
        idx.truncate(keep);
    }
    idx.sort_unstable_by(order);
    idx
}

/// The similarity-weighted distribution for one test embedding: the top
/// `ceil(beta * n)` calibration scores plus a `+inf` test mass, weighted by
/// `softmax(similarity / sigma)` where the test point's weight uses its
/// self-similarity.
pub fn similarity_point_masses(
    cal: &FlatCalibrationSet,
    x_test: &FeatureVector,
    params: &SimilarityWeighting,
) -> Result<WeightedPointMasses> {
    params.validate()?;
    if x_test.dim() != cal.embedding_dim() {
        return Err(Error::DimensionMismatch {
            expected: cal.embedding_dim(),
            got: x_test.dim(),
            context: "test embedding",
        });
    }
    let z = x_test.as_slice();
    let sims: Vec<f64> = cal
        .embeddings
        .iter()
        .map(|e| params.similarity.eval(z, e.as_slice()))
        .collect();
    let kept = top_similar(&sims, params.kept(cal.len()));

    let mut scores: Vec<f64> = kept.iter().map(|&i| cal.scores[i]).collect();
    let mut logits: Vec<f64> = kept.iter().map(|&i| sims[i] / params.sigma).collect();
    scores.push(f64::INFINITY);
    logits.push(params.similarity.eval(z, z) / params.sigma);

    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut masses: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = masses.iter().sum();
    masses.iter_mut().for_each(|m| *m /= total);
    WeightedPointMasses::new(scores, masses)
}

/// Threshold for one test point from the classifier's output on it.
pub fn algorithm1_threshold<C: DomainClassifier>(
    cal: &GroupedCalibrationSet,
    classifier: &C,
    x_test: &C::Input,
    alpha: f64,
) -> Result<ThresholdRule> {
    check_classifier_dim(cal, classifier)?;
    let lambda_hat = classifier.classify(x_test)?;
    group_weighted_threshold(cal, &lambda_hat, alpha)
}

/// Mean classifier output over a batch, renormalized.
pub fn batch_mixture_estimate<C: DomainClassifier>(
    classifier: &C,
    batch: &[C::Input],
) -> Result<ProbabilitySimplex> {
    if batch.is_empty() {
        return domain("test batch must be non-empty");
    }
    let mut mean = vec![0.0; classifier.num_domains()];
    for x in batch {
        let p = classifier.classify(x)?;
        for (acc, v) in mean.iter_mut().zip(p.as_slice()) {
            *acc += v;
        }
    }
    ProbabilitySimplex::normalized(mean)
}

/// One threshold for the whole batch from the classifier's mean output.
pub fn algorithm2_threshold<C: DomainClassifier>(
    cal: &GroupedCalibrationSet,
    classifier: &C,
    test_batch: &[C::Input],
    alpha: f64,
) -> Result<ThresholdRule> {
    check_classifier_dim(cal, classifier)?;
    let lambda_hat = batch_mixture_estimate(classifier, test_batch)?;
    group_weighted_threshold(cal, &lambda_hat, alpha)
}

fn check_classifier_dim<C: DomainClassifier>(cal: &GroupedCalibrationSet, c: &C) -> Result<()> {
    if c.num_domains() != cal.num_domains() {
        return Err(Error::DimensionMismatch {
            expected: cal.num_domains(),
            got: c.num_domains(),
            context: "classifier output vs calibration domains",
        });
    }
    Ok(())
}

/// Similarity-weighted threshold for one test embedding.
pub fn algorithm3_threshold(
    cal: &FlatCalibrationSet,
    x_test: &FeatureVector,
    alpha: f64,
    params: &SimilarityWeighting,
) -> Result<ThresholdRule> {
    check_alpha(alpha)?;
    let pm = similarity_point_masses(cal, x_test, params)?;
    let q = weighted_pointmass_quantile(&pm, 1.0 - alpha)?;
    Ok(ThresholdRule::new(q, cal.direction))
}

fn check_recall(target_recall: f64) -> Result<()> {
    if !(target_recall > 0.0 && target_recall < 1.0) {
        return domain(format!("target recall must lie in (0, 1), got {target_recall}"));
    }
    Ok(())
}

/// Flagging threshold from scores of known-positive (hallucinated)
/// calibration examples. A test example is flagged when its oriented score
/// exceeds the threshold; see [`risk_decision`].
///
/// The threshold is the largest score `v` with at most
/// `floor((n + 1)(1 - r))` calibration scores `<= v`, so that at least
/// `ceil((n + 1) r)` scores lie strictly above it. When no score qualifies
/// the threshold is `-inf` and everything is flagged.
pub fn risk_control_threshold(scores: &[f64], target_recall: f64) -> Result<ThresholdRule> {
    risk_control_threshold_directed(scores, target_recall, Direction::default())
}

pub fn risk_control_threshold_directed(
    scores: &[f64],
    target_recall: f64,
    direction: Direction,
) -> Result<ThresholdRule> {
    check_recall(target_recall)?;
    if scores.is_empty() {
        return domain("risk calibration needs at least one score");
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return domain("risk calibration scores must be finite");
    }
    let mut sorted: Vec<f64> = scores.iter().map(|&s| direction.orient(s)).collect();
    sorted.sort_by(f64::total_cmp);
    let allowed = lower_conformal_rank(sorted.len(), 1.0 - target_recall);
    // largest i <= allowed where the i-th smallest value is not tied with the next
    let q = (1..=allowed)
        .rev()
        .find(|&i| i == sorted.len() || sorted[i] > sorted[i - 1])
        .map_or(f64::NEG_INFINITY, |i| sorted[i - 1]);
    Ok(ThresholdRule::new(q, direction))
}

/// Weighted analogue of [`risk_control_threshold`]: the largest score whose
/// cumulative calibration mass stays within `1 - r`.
pub fn weighted_risk_control_threshold(
    pm: &WeightedPointMasses,
    target_recall: f64,
    direction: Direction,
) -> Result<ThresholdRule> {
    check_recall(target_recall)?;
    let q = weighted_lower_quantile(pm, 1.0 - target_recall)?;
    Ok(ThresholdRule::new(q, direction))
}

/// Similarity-weighted flagging threshold for one test embedding.
pub fn algorithm3_risk_threshold(
    cal: &FlatCalibrationSet,
    x_test: &FeatureVector,
    target_recall: f64,
    params: &SimilarityWeighting,
) -> Result<ThresholdRule> {
    let pm = similarity_point_masses(cal, x_test, params)?;
    weighted_risk_control_threshold(&pm, target_recall, cal.direction)
}

/// Outcome of thresholding one test score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskDecision {
    pub flagged: bool,
    pub score: f64,
    pub threshold: f64,
}

/// Flags `score` when it lies strictly beyond the threshold, in the rule's
/// orientation.
pub fn risk_decision(rule: &ThresholdRule, score: f64) -> RiskDecision {
    RiskDecision {
        flagged: !rule.contains(score),
        score,
        threshold: rule.threshold(),
    }
}

/// Classes admitted by a threshold rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PredictionSet {
    /// The full label space.
    All { num_classes: usize },
    Members(BTreeSet<usize>),
}

impl PredictionSet {
    pub fn len(&self) -> usize {
        match self {
            PredictionSet::All { num_classes } => *num_classes,
            PredictionSet::Members(m) => m.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, class: usize) -> bool {
        match self {
            PredictionSet::All { num_classes } => class < *num_classes,
            PredictionSet::Members(m) => m.contains(&class),
        }
    }
}

pub fn build_prediction_set(rule: &ThresholdRule, per_class_scores: &[f64]) -> PredictionSet {
    if rule.is_full_set() {
        return PredictionSet::All {
            num_classes: per_class_scores.len(),
        };
    }
    PredictionSet::Members(
        per_class_scores
            .iter()
            .enumerate()
            .filter(|(_, &s)| rule.contains(s))
            .map(|(j, _)| j)
            .collect(),
    )
}
