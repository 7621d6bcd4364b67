use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Tolerance on `|sum - 1|` for any probability vector accepted by the crate.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

pub(crate) fn validate_distribution(entries: &[f64], what: &str) -> Result<()> {
    if entries.is_empty() {
        return domain(format!("{what} must have at least one entry"));
    }
    for (i, &p) in entries.iter().enumerate() {
        if !p.is_finite() || !(0.0..=1.0).contains(&p) {
            return domain(format!("{what} entry {i} = {p} is not in [0, 1]"));
        }
    }
    let total: f64 = entries.iter().sum();
    if (total - 1.0).abs() > SIMPLEX_TOLERANCE {
        return domain(format!("{what} sums to {total}, not 1"));
    }
    Ok(())
}

/// A nonnegative weight vector over `K` domains that sums to one.
///
/// Mixture weights of a test environment, domain-classifier outputs and
/// their batch averages all use this type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbabilitySimplex(Vec<f64>);

impl ProbabilitySimplex {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        validate_distribution(&weights, "probability simplex")?;
        Ok(Self(weights))
    }

    /// Divides by the sum before validating. Fails if the sum is not positive.
    pub fn normalized(mut weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return domain("weights must be finite and nonnegative");
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return domain("weights must have positive total mass");
        }
        for w in &mut weights {
            *w /= total;
        }
        Self::new(weights)
    }

    pub fn uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return domain("simplex dimension must be at least 1");
        }
        Ok(Self(vec![1.0 / k as f64; k]))
    }

    pub fn one_hot(k: usize, hot: usize) -> Result<Self> {
        if hot >= k {
            return domain(format!("index {hot} out of range for dimension {k}"));
        }
        let mut w = vec![0.0; k];
        w[hot] = 1.0;
        Ok(Self(w))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Index of the largest weight (lowest index on ties) and its value.
    pub fn argmax(&self) -> (usize, f64) {
        let mut best = (0, self.0[0]);
        for (i, &w) in self.0.iter().enumerate().skip(1) {
            if w > best.1 {
                best = (i, w);
            }
        }
        best
    }
}

impl TryFrom<Vec<f64>> for ProbabilitySimplex {
    type Error = crate::Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ProbabilitySimplex> for Vec<f64> {
    fn from(s: ProbabilitySimplex) -> Self {
        s.0
    }
}

impl std::ops::Index<usize> for ProbabilitySimplex {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}
