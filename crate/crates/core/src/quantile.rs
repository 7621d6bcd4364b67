//! Threshold selection: the split-conformal quantile, per-domain and max
//! thresholds, the group-weighted threshold driven by estimated mixture
//! weights, and quantiles of weighted point-mass distributions.
//!
//! All quantile math assumes larger scores are less conforming. Scores
//! with the opposite orientation are negated once, when a calibration
//! structure is built, and a [`ThresholdRule`] remembers the orientation so
//! that membership tests accept raw scores.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::simplex::ProbabilitySimplex;

/// Slack allowed when comparing a running sum of masses against a level.
/// Summing `n` equal masses of `1/(n+1)` drifts by a few ulps.
pub const MASS_TOLERANCE: f64 = 1e-12;

/// Which end of the score scale marks a less conforming example.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    #[serde(alias = "higher")]
    HigherIsLessConforming,
    #[serde(alias = "lower")]
    LowerIsLessConforming,
}

impl Direction {
    /// Maps a raw score onto the internal higher-is-less-conforming scale.
    /// The map is an involution.
    #[inline]
    pub fn orient(self, score: f64) -> f64 {
        match self {
            Direction::HigherIsLessConforming => score,
            Direction::LowerIsLessConforming => -score,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Direction::HigherIsLessConforming => "higher_is_less_conforming",
            Direction::LowerIsLessConforming => "lower_is_less_conforming",
        }
    }
}

/// A conformal threshold and the score orientation it applies to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdRule {
    internal: f64,
    direction: Direction,
}

impl ThresholdRule {
    /// `threshold` is on the internal (oriented) scale.
    pub fn new(threshold: f64, direction: Direction) -> Self {
        Self {
            internal: threshold,
            direction,
        }
    }

    pub fn full_set(direction: Direction) -> Self {
        Self::new(f64::INFINITY, direction)
    }

    /// The threshold on the caller's raw score scale. Under the flipped
    /// orientation a candidate is included when its score is `>=` this.
    pub fn threshold(&self) -> f64 {
        self.direction.orient(self.internal)
    }

    /// The threshold on the internal scale, where inclusion is `<=`.
    pub fn oriented_threshold(&self) -> f64 {
        self.internal
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    /// True when the rule accepts every candidate.
    pub fn is_full_set(&self) -> bool {
        self.internal == f64::INFINITY
    }

    /// Whether a candidate with this raw score belongs to the prediction set.
    #[inline]
    pub fn contains(&self, score: f64) -> bool {
        self.direction.orient(score) <= self.internal
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return domain(format!("alpha must lie in (0, 1), got {alpha}"));
    }
    Ok(())
}

fn check_scores(scores: &[f64]) -> Result<()> {
    if scores.is_empty() {
        return domain("calibration scores must be non-empty");
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return domain(format!("calibration score {i} is not finite ({})", scores[i]));
    }
    Ok(())
}

/// Smallest rank `r` in `1..=n+1` with `r / (n + 1) >= 1 - alpha`, i.e.
/// `ceil((n + 1)(1 - alpha))` evaluated so that it agrees with the
/// floating-point coverage constraint used by the weighted solvers.
pub fn conformal_rank(n: usize, alpha: f64) -> usize {
    let denom = (n + 1) as f64;
    let target = 1.0 - alpha;
    let mut rank = (denom * target).ceil().clamp(0.0, denom) as usize;
    while rank > 0 && (rank - 1) as f64 / denom >= target {
        rank -= 1;
    }
    while rank <= n && (rank as f64) / denom < target {
        rank += 1;
    }
    rank
}

/// Largest rank `j` in `0..=n` with `j / (n + 1) <= level`, the
/// `floor((n + 1) * level)` counterpart of [`conformal_rank`].
pub fn lower_conformal_rank(n: usize, level: f64) -> usize {
    let denom = (n + 1) as f64;
    let mut rank = (denom * level).floor().clamp(0.0, n as f64) as usize;
    while rank < n && ((rank + 1) as f64) / denom <= level {
        rank += 1;
    }
    while rank > 0 && (rank as f64) / denom > level {
        rank -= 1;
    }
    rank
}

/// Split-conformal threshold: the `conformal_rank(n, alpha)`-th smallest
/// score, or `+inf` when that rank exceeds `n`.
pub fn standard_cp_threshold(scores: &[f64], alpha: f64) -> Result<ThresholdRule> {
    standard_cp_threshold_directed(scores, alpha, Direction::default())
}

pub fn standard_cp_threshold_directed(
    scores: &[f64],
    alpha: f64,
    direction: Direction,
) -> Result<ThresholdRule> {
    check_scores(scores)?;
    check_alpha(alpha)?;
    let mut sorted: Vec<f64> = scores.iter().map(|&s| direction.orient(s)).collect();
    sorted.sort_by(f64::total_cmp);
    Ok(ThresholdRule::new(sorted_cp_threshold(&sorted, alpha), direction))
}

fn sorted_cp_threshold(sorted: &[f64], alpha: f64) -> f64 {
    let rank = conformal_rank(sorted.len(), alpha);
    if rank == 0 {
        // only reachable for alpha >= 1, which callers reject
        f64::NEG_INFINITY
    } else if rank > sorted.len() {
        f64::INFINITY
    } else {
        sorted[rank - 1]
    }
}

/// Calibration scores grouped by domain, stored oriented and sorted.
#[derive(Debug, Clone)]
pub struct GroupedCalibrationSet {
    groups: Vec<Vec<f64>>,
    /// Sorted distinct scores across all groups.
    candidates: Vec<f64>,
    direction: Direction,
}

impl GroupedCalibrationSet {
    pub fn new(groups: Vec<Vec<f64>>) -> Result<Self> {
        Self::with_direction(groups, Direction::default())
    }

    pub fn with_direction(groups: Vec<Vec<f64>>, direction: Direction) -> Result<Self> {
        if groups.is_empty() {
            return domain("calibration set needs at least one domain");
        }
        let mut oriented = Vec::with_capacity(groups.len());
        for (k, g) in groups.into_iter().enumerate() {
            if g.is_empty() {
                return domain(format!("domain {k} has no calibration scores"));
            }
            check_scores(&g)?;
            let mut g: Vec<f64> = g.into_iter().map(|s| direction.orient(s)).collect();
            g.sort_by(f64::total_cmp);
            oriented.push(g);
        }
        let mut candidates: Vec<f64> = oriented.iter().flatten().copied().collect();
        candidates.sort_by(f64::total_cmp);
        candidates.dedup();
        Ok(Self {
            groups: oriented,
            candidates,
            direction,
        })
    }

    pub fn num_domains(&self) -> usize {
        self.groups.len()
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    /// Sorted oriented scores of domain `k`.
    pub fn domain_scores(&self, k: usize) -> &[f64] {
        &self.groups[k]
    }

    pub fn domain_size(&self, k: usize) -> usize {
        self.groups[k].len()
    }

    pub fn total_size(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    /// Number of domain-`k` scores `<= q` on the oriented scale.
    pub fn count_at_most(&self, k: usize, q: f64) -> usize {
        self.groups[k].partition_point(|&s| s <= q)
    }

    /// `sum_k lambda_k * m_k(q) / (n_k + 1)`, the lower bound on coverage
    /// that the weighted threshold must push past `1 - alpha`.
    pub fn coverage_bound(&self, lambda: &ProbabilitySimplex, q: f64) -> f64 {
        let mut total = 0.0;
        for (k, group) in self.groups.iter().enumerate() {
            let m = group.partition_point(|&s| s <= q);
            total += lambda[k] * m as f64 / (group.len() + 1) as f64;
        }
        total
    }

    fn check_lambda(&self, lambda: &ProbabilitySimplex) -> Result<()> {
        if lambda.len() != self.groups.len() {
            return Err(Error::DimensionMismatch {
                expected: self.groups.len(),
                got: lambda.len(),
                context: "domain weights vs calibration domains",
            });
        }
        Ok(())
    }
}

/// Split-conformal threshold within each domain separately.
pub fn per_domain_thresholds(
    cal: &GroupedCalibrationSet,
    alpha: f64,
) -> Result<Vec<ThresholdRule>> {
    check_alpha(alpha)?;
    Ok(cal
        .groups
        .iter()
        .map(|g| ThresholdRule::new(sorted_cp_threshold(g, alpha), cal.direction))
        .collect())
}

/// Worst-case threshold: the largest per-domain threshold.
pub fn max_threshold(cal: &GroupedCalibrationSet, alpha: f64) -> Result<ThresholdRule> {
    let q = per_domain_thresholds(cal, alpha)?
        .iter()
        .map(ThresholdRule::oriented_threshold)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(ThresholdRule::new(q, cal.direction))
}

/// Smallest calibration score `q` with
/// `sum_k lambda_k * m_k(q) / (n_k + 1) >= 1 - alpha`, or `+inf` if no
/// score reaches the level.
///
/// The left side is a nondecreasing step function of `q` that only moves at
/// calibration scores, so a binary search over the distinct scores finds the
/// exact minimizer.
pub fn group_weighted_threshold(
    cal: &GroupedCalibrationSet,
    lambda: &ProbabilitySimplex,
    alpha: f64,
) -> Result<ThresholdRule> {
    check_alpha(alpha)?;
    cal.check_lambda(lambda)?;
    let target = 1.0 - alpha;
    let idx = cal
        .candidates
        .partition_point(|&q| cal.coverage_bound(lambda, q) < target);
    let q = cal.candidates.get(idx).copied().unwrap_or(f64::INFINITY);
    Ok(ThresholdRule::new(q, cal.direction))
}

/// A discrete distribution over finite calibration scores plus one point
/// mass at `+inf` standing in for the unseen test score.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedPointMasses {
    /// Sorted ascending; the last entry is `+inf`.
    scores: Vec<f64>,
    masses: Vec<f64>,
}

impl WeightedPointMasses {
    pub fn new(scores: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        if scores.len() != masses.len() {
            return Err(Error::DimensionMismatch {
                expected: scores.len(),
                got: masses.len(),
                context: "point-mass scores vs masses",
            });
        }
        let infinite = scores.iter().filter(|&&s| s == f64::INFINITY).count();
        if infinite != 1 {
            return domain(format!(
                "exactly one point mass must sit at +inf, found {infinite}"
            ));
        }
        if scores.iter().any(|s| s.is_nan() || *s == f64::NEG_INFINITY) {
            return domain("point-mass scores must be finite apart from the +inf mass");
        }
        crate::simplex::validate_distribution(&masses, "point masses")?;
        let mut pairs: Vec<(f64, f64)> = scores.into_iter().zip(masses).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (scores, masses) = pairs.into_iter().unzip();
        Ok(Self { scores, masses })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Sorted support, ending in `+inf`.
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return domain(format!("quantile level must lie in (0, 1), got {level}"));
    }
    Ok(())
}

/// Smallest support point whose cumulative mass reaches `level`. May be the
/// `+inf` test mass.
pub fn weighted_pointmass_quantile(pm: &WeightedPointMasses, level: f64) -> Result<f64> {
    check_level(level)?;
    let mut cumulative = 0.0;
    for (i, (&s, &m)) in pm.scores.iter().zip(&pm.masses).enumerate() {
        cumulative += m;
        let tie_follows = pm.scores.get(i + 1) == Some(&s);
        if !tie_follows && cumulative >= level - MASS_TOLERANCE {
            return Ok(s);
        }
    }
    Ok(f64::INFINITY)
}

/// Largest finite support point whose cumulative mass stays at or below
/// `level`, or `-inf` when even the smallest score carries more mass than
/// that. The `+inf` test mass never counts toward the cumulative total.
pub fn weighted_lower_quantile(pm: &WeightedPointMasses, level: f64) -> Result<f64> {
    check_level(level)?;
    let mut cumulative = 0.0;
    let mut best = f64::NEG_INFINITY;
    for (i, (&s, &m)) in pm.scores.iter().zip(&pm.masses).enumerate() {
        if s == f64::INFINITY {
            break;
        }
        cumulative += m;
        if pm.scores.get(i + 1) == Some(&s) {
            continue;
        }
        if cumulative <= level + MASS_TOLERANCE {
            best = s;
        } else {
            break;
        }
    }
    Ok(best)
}
