//! Conformity score functions.
//!
//! Vision scores map a class-probability vector and a candidate label to a
//! score; language scores map token log-probabilities or a pairwise
//! entailment matrix to a score. Every function here is pure.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::simplex::validate_distribution;

/// Class probabilities output by a classifier, `J` entries summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector(Vec<f64>);

impl ProbabilityVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        validate_distribution(&entries, "probability vector")?;
        Ok(Self(entries))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn num_classes(&self) -> usize {
        self.0.len()
    }

    fn check_label(&self, label: usize) -> Result<()> {
        if label >= self.0.len() {
            return domain(format!(
                "label {label} out of range for {} classes",
                self.0.len()
            ));
        }
        Ok(())
    }

    /// 1-based rank of `label` under a descending sort, ties broken by
    /// lower class index, and the cumulative probability through that rank.
    fn rank_and_mass(&self, label: usize) -> (usize, f64) {
        let mut order: Vec<usize> = (0..self.0.len()).collect();
        // stable: equal probabilities keep index order
        order.sort_by(|&a, &b| self.0[b].total_cmp(&self.0[a]));
        let mut mass = 0.0;
        for (pos, &class) in order.iter().enumerate() {
            mass += self.0[class];
            if class == label {
                return (pos + 1, mass);
            }
        }
        unreachable!("label validated against class count")
    }
}

/// Token log-probabilities of one generated response, with optional
/// per-token weights.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenLogProbSequence {
    logprobs: Vec<f64>,
    weights: Option<Vec<f64>>,
}

impl TokenLogProbSequence {
    pub fn new(logprobs: Vec<f64>, weights: Option<Vec<f64>>) -> Result<Self> {
        if logprobs.is_empty() {
            return domain("token sequence must contain at least one token");
        }
        if let Some(i) = logprobs.iter().position(|l| !l.is_finite() || *l > 0.0) {
            return domain(format!(
                "token {i} log-probability {} is not a finite value <= 0",
                logprobs[i]
            ));
        }
        if let Some(w) = &weights {
            if w.len() != logprobs.len() {
                return Err(Error::DimensionMismatch {
                    expected: logprobs.len(),
                    got: w.len(),
                    context: "token weights",
                });
            }
            validate_distribution(w, "token weights")?;
        }
        Ok(Self { logprobs, weights })
    }

    pub fn len(&self) -> usize {
        self.logprobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logprobs.is_empty()
    }
}

/// Square matrix of pairwise entailment between `m` sampled responses.
#[derive(Debug, Clone, PartialEq)]
pub struct EntailmentMatrix {
    size: usize,
    entries: Vec<f64>,
}

impl EntailmentMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let size = rows.len();
        if size == 0 {
            return domain("entailment matrix must be non-empty");
        }
        let mut entries = Vec::with_capacity(size * size);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != size {
                return domain(format!(
                    "entailment matrix is not square: row {i} has {} entries, expected {size}",
                    row.len()
                ));
            }
            for (j, &w) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&w) {
                    return domain(format!("entry ({i}, {j}) = {w} is not in [0, 1]"));
                }
                if i == j && w != 1.0 {
                    return domain(format!("diagonal entry ({i}, {i}) = {w} must be 1"));
                }
            }
            entries.extend(row);
        }
        Ok(Self { size, entries })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.size..(i + 1) * self.size]
    }
}

/// LAC: one minus the probability of the label.
pub fn lac_score(probs: &ProbabilityVector, label: usize) -> Result<f64> {
    probs.check_label(label)?;
    Ok(1.0 - probs.0[label])
}

/// APS: probability mass accumulated in descending order up to and
/// including the label.
pub fn aps_score(probs: &ProbabilityVector, label: usize) -> Result<f64> {
    probs.check_label(label)?;
    Ok(probs.rank_and_mass(label).1)
}

/// RAPS: the APS score plus `reg_weight * max(rank - reg_offset, 0)`, with a
/// 1-based rank.
pub fn raps_score(
    probs: &ProbabilityVector,
    label: usize,
    reg_weight: f64,
    reg_offset: usize,
) -> Result<f64> {
    probs.check_label(label)?;
    if !(reg_weight >= 0.0) || !reg_weight.is_finite() {
        return domain(format!("RAPS weight must be finite and >= 0, got {reg_weight}"));
    }
    let (rank, mass) = probs.rank_and_mass(label);
    Ok(mass + reg_weight * rank.saturating_sub(reg_offset) as f64)
}

/// Label-conditional score applied to probability-vector dataset rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassScore {
    #[default]
    Lac,
    Aps,
    Raps,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassScoreSpec {
    pub function: ClassScore,
    pub raps_weight: f64,
    pub raps_offset: usize,
}

impl ClassScoreSpec {
    pub fn score(&self, probs: &ProbabilityVector, label: usize) -> Result<f64> {
        match self.function {
            ClassScore::Lac => lac_score(probs, label),
            ClassScore::Aps => aps_score(probs, label),
            ClassScore::Raps => raps_score(probs, label, self.raps_weight, self.raps_offset),
        }
    }
}

/// Length-normalized log-likelihood of a response.
pub fn lns_score(seq: &TokenLogProbSequence) -> Result<f64> {
    if seq.weights.is_some() {
        return domain("LNS is defined on unweighted sequences");
    }
    Ok(seq.logprobs.iter().sum::<f64>() / seq.logprobs.len() as f64)
}

/// Weighted geometric mean of token probabilities; the weights come with
/// the sequence.
pub fn mars_score(seq: &TokenLogProbSequence) -> Result<f64> {
    let Some(weights) = &seq.weights else {
        return domain("MARS requires per-token weights");
    };
    let log_score: f64 = weights
        .iter()
        .zip(&seq.logprobs)
        .map(|(w, l)| w * l)
        .sum();
    Ok(log_score.exp())
}

/// Degree-matrix uncertainty `trace(mI - D) / m^2` with `D_ii` the row sums.
pub fn degree_matrix_score(w: &EntailmentMatrix) -> f64 {
    let m = w.size as f64;
    let trace: f64 = (0..w.size).map(|i| m - w.row(i).iter().sum::<f64>()).sum();
    trace / (m * m)
}
