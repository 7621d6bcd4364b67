//! Domain classifiers and the diagnostics used to judge them.
//!
//! A domain classifier maps an input to a distribution over the `K`
//! calibration domains. Three concrete classifiers live here: the Gaussian
//! posterior of a synthetic mixture (the Bayes oracle when given the test
//! environment's weights), a hard classifier with a chosen per-domain
//! accuracy whose mistakes are placed adversarially, and a lookup table of
//! externally produced predictions.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::io::{create_file, CsvTable};
use crate::simplex::ProbabilitySimplex;

/// A point in feature or embedding space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.iter().any(|c| !c.is_finite()) {
            return domain("feature vector entries must be finite");
        }
        Ok(Self(coords))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub(crate) fn from_vec_unchecked(coords: Vec<f64>) -> Self {
        Self(coords)
    }
}

pub trait DomainClassifier {
    type Input;

    fn num_domains(&self) -> usize;

    fn classify(&self, input: &Self::Input) -> Result<ProbabilitySimplex>;
}

/// Per-domain score law of a synthetic scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ScoreDistribution {
    Beta { a: f64, b: f64 },
    /// Uniform on `[low, high)`.
    Uniform { low: f64, high: f64 },
}

impl ScoreDistribution {
    /// Beta law with the given mean and `a + b = concentration`.
    pub fn beta_with_mean(mean: f64, concentration: f64) -> Result<Self> {
        if !(mean > 0.0 && mean < 1.0) || !(concentration > 0.0) {
            return domain(format!(
                "beta mean must be in (0, 1) and concentration > 0, got {mean} and {concentration}"
            ));
        }
        Ok(ScoreDistribution::Beta {
            a: mean * concentration,
            b: (1.0 - mean) * concentration,
        })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ScoreDistribution::Beta { a, b } if a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite() => Ok(()),
            ScoreDistribution::Uniform { low, high } if low < high && low.is_finite() && high.is_finite() => Ok(()),
            other => domain(format!("invalid score distribution {other:?}")),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            ScoreDistribution::Beta { a, b } => a / (a + b),
            ScoreDistribution::Uniform { low, high } => 0.5 * (low + high),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ScoreDistribution::Beta { a, b } => Beta::new(a, b)
                .expect("validated beta parameters")
                .sample(rng),
            ScoreDistribution::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
        }
    }
}

/// A synthetic mixture of `K` domains: isotropic Gaussian features around
/// per-domain means and a per-domain score law, scores independent of
/// features given the domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixtureScenario {
    pub means: Vec<FeatureVector>,
    pub feature_sigma: f64,
    pub score_laws: Vec<ScoreDistribution>,
    pub prior: ProbabilitySimplex,
}

impl GaussianMixtureScenario {
    pub fn new(
        means: Vec<FeatureVector>,
        feature_sigma: f64,
        score_laws: Vec<ScoreDistribution>,
        prior: ProbabilitySimplex,
    ) -> Result<Self> {
        let scenario = Self {
            means,
            feature_sigma,
            score_laws,
            prior,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.means.len();
        if k == 0 {
            return domain("scenario needs at least one domain");
        }
        if self.score_laws.len() != k || self.prior.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: if self.score_laws.len() != k {
                    self.score_laws.len()
                } else {
                    self.prior.len()
                },
                context: "scenario domains",
            });
        }
        if !(self.feature_sigma > 0.0) || !self.feature_sigma.is_finite() {
            return domain(format!("feature sigma must be > 0, got {}", self.feature_sigma));
        }
        let d = self.means[0].dim();
        if self.means.iter().any(|m| m.dim() != d) {
            return domain("all domain means must share one dimension");
        }
        for i in 0..k {
            for j in 0..i {
                if self.means[i] == self.means[j] {
                    return domain(format!("domain means {j} and {i} coincide"));
                }
            }
        }
        self.score_laws.iter().try_for_each(ScoreDistribution::validate)
    }

    pub fn num_domains(&self) -> usize {
        self.means.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.means[0].dim()
    }

    /// The same scenario under different mixture weights.
    pub fn with_prior(&self, prior: ProbabilitySimplex) -> Result<Self> {
        Self::new(
            self.means.clone(),
            self.feature_sigma,
            self.score_laws.clone(),
            prior,
        )
    }
}

/// Posterior over domains of a Gaussian mixture, optionally tempered.
///
/// With the test environment's weights as prior and unit temperature this is
/// the Bayes-optimal domain classifier for that environment.
#[derive(Debug, Clone)]
pub struct GaussianPosteriorClassifier {
    means: Vec<FeatureVector>,
    inv_two_var: f64,
    log_prior: Vec<f64>,
    temperature: f64,
}

impl GaussianPosteriorClassifier {
    pub fn new(
        scenario: &GaussianMixtureScenario,
        prior: &ProbabilitySimplex,
        temperature: f64,
    ) -> Result<Self> {
        scenario.validate()?;
        if prior.len() != scenario.num_domains() {
            return Err(Error::DimensionMismatch {
                expected: scenario.num_domains(),
                got: prior.len(),
                context: "posterior prior",
            });
        }
        if !(temperature > 0.0) || !temperature.is_finite() {
            return domain(format!("temperature must be > 0, got {temperature}"));
        }
        Ok(Self {
            means: scenario.means.clone(),
            inv_two_var: 1.0 / (2.0 * scenario.feature_sigma * scenario.feature_sigma),
            log_prior: prior.as_slice().iter().map(|p| p.ln()).collect(),
            temperature,
        })
    }

    /// Bayes oracle: the scenario's own prior, untempered.
    pub fn oracle(scenario: &GaussianMixtureScenario) -> Result<Self> {
        Self::new(scenario, &scenario.prior, 1.0)
    }

    fn posterior(&self, x: &[f64]) -> Result<ProbabilitySimplex> {
        if x.len() != self.means[0].dim() {
            return Err(Error::DimensionMismatch {
                expected: self.means[0].dim(),
                got: x.len(),
                context: "classifier input",
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return domain("classifier input must be finite");
        }
        let logits: Vec<f64> = self
            .means
            .iter()
            .zip(&self.log_prior)
            .map(|(mu, lp)| {
                let sq: f64 = mu.0.iter().zip(x).map(|(m, v)| (v - m) * (v - m)).sum();
                (lp - sq * self.inv_two_var) / self.temperature
            })
            .collect();
        Ok(softmax_simplex(&logits))
    }
}

/// Normalized `exp` of log-weights, shifted by their maximum. Entries at
/// `-inf` get zero weight.
pub(crate) fn softmax_simplex(logits: &[f64]) -> ProbabilitySimplex {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    for v in &mut w {
        *v /= total;
    }
    ProbabilitySimplex::new(w).expect("softmax of finite maximum lies on the simplex")
}

impl DomainClassifier for GaussianPosteriorClassifier {
    type Input = FeatureVector;

    fn num_domains(&self) -> usize {
        self.means.len()
    }

    fn classify(&self, input: &FeatureVector) -> Result<ProbabilitySimplex> {
        self.posterior(&input.0)
    }
}

/// Posterior `Pr(domain | x)` under `scenario`, whose prior should be the
/// test environment's mixture weights.
pub fn bayes_oracle(scenario: &GaussianMixtureScenario, x: &FeatureVector) -> Result<ProbabilitySimplex> {
    GaussianPosteriorClassifier::oracle(scenario)?.classify(x)
}

/// Ground truth visible to the adversarial classifier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredPoint {
    pub score: f64,
    pub domain: usize,
}

/// Hard two-domain classifier with accuracy `gamma` on each domain.
///
/// Built for the scenario where domain 0 scores are uniform on `[0, 1)` and
/// domain 1 scores are uniform on `[1, 2]`. Every domain-1 mistake is spent
/// on the lowest-scoring domain-1 points (scores below `2 - gamma`, which
/// lie under the domain's `1 - alpha` quantile whenever `gamma >= alpha`),
/// so those points inherit domain 0's threshold and are miscovered. Domain 0
/// mistakes hit a seeded pseudo-random `1 - gamma` fraction.
#[derive(Debug, Clone, Copy)]
pub struct AdversarialGammaClassifier {
    gamma: f64,
    alpha: f64,
    seed: u64,
}

impl AdversarialGammaClassifier {
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Domain-1 points with scores below this are labelled domain 0.
    pub fn domain1_cutoff(&self) -> f64 {
        1.0 + (1.0 - self.gamma)
    }

    pub fn predict(&self, point: &ScoredPoint) -> usize {
        match point.domain {
            0 => {
                if unit_hash(self.seed, point.score.to_bits()) < 1.0 - self.gamma {
                    1
                } else {
                    0
                }
            }
            _ => {
                if point.score < self.domain1_cutoff() {
                    0
                } else {
                    1
                }
            }
        }
    }
}

pub fn adversarial_gamma_classifier(gamma: f64, alpha: f64, seed: u64) -> Result<AdversarialGammaClassifier> {
    if !(0.0..=1.0).contains(&gamma) {
        return domain(format!("gamma must lie in [0, 1], got {gamma}"));
    }
    crate::quantile::check_alpha(alpha)?;
    Ok(AdversarialGammaClassifier { gamma, alpha, seed })
}

impl DomainClassifier for AdversarialGammaClassifier {
    type Input = ScoredPoint;

    fn num_domains(&self) -> usize {
        2
    }

    fn classify(&self, input: &ScoredPoint) -> Result<ProbabilitySimplex> {
        if input.domain > 1 {
            return domain(format!("domain {} outside the two-domain scenario", input.domain));
        }
        ProbabilitySimplex::one_hot(2, self.predict(input))
    }
}

/// Keyed SplitMix64 mapped to `[0, 1)`.
fn unit_hash(seed: u64, key: u64) -> f64 {
    let mut z = seed ^ key.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

/// Predictions produced elsewhere, looked up by id.
#[derive(Debug, Clone, PartialEq)]
pub struct TableClassifier {
    order: Vec<String>,
    rows: HashMap<String, ProbabilitySimplex>,
    num_domains: usize,
}

#[derive(Serialize, Deserialize)]
struct TableRecord {
    id: String,
    probs: ProbabilitySimplex,
}

impl TableClassifier {
    pub fn from_rows(rows: Vec<(String, ProbabilitySimplex)>) -> Result<Self> {
        let Some(first) = rows.first() else {
            return domain("classifier table is empty");
        };
        let num_domains = first.1.len();
        let mut order = Vec::with_capacity(rows.len());
        let mut map = HashMap::with_capacity(rows.len());
        for (id, p) in rows {
            if p.len() != num_domains {
                return Err(Error::DimensionMismatch {
                    expected: num_domains,
                    got: p.len(),
                    context: "classifier table row",
                });
            }
            if map.insert(id.clone(), p).is_some() {
                return domain(format!("duplicate id `{id}` in classifier table"));
            }
            order.push(id);
        }
        Ok(Self {
            order,
            rows: map,
            num_domains,
        })
    }

    /// Reads `id,p_1,...,p_K` CSV, or a JSON array of `{"id", "probs"}`
    /// records when the extension is `.json`.
    pub fn load(path: &Path) -> Result<Self> {
        if path.extension().is_some_and(|e| e == "json") {
            let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.to_owned(),
                source,
            })?;
            let records: Vec<TableRecord> = serde_json::from_str(&text).map_err(|e| Error::Format {
                path: path.to_owned(),
                line: e.line() as u64,
                column: e.column(),
                message: e.to_string(),
            })?;
            return Self::from_rows(records.into_iter().map(|r| (r.id, r.probs)).collect());
        }
        let table = CsvTable::read(path)?;
        let id_col = table
            .column("id")
            .ok_or_else(|| table.error(1, 0, "missing `id` column"))?;
        let prob_cols = table.numbered_columns("p_");
        if prob_cols.is_empty() {
            return Err(table.error(1, 0, "missing `p_1..p_K` columns"));
        }
        let mut seen = HashMap::new();
        let mut rows = Vec::with_capacity(table.rows.len());
        for (line, record) in &table.rows {
            let id = table.field(*line, record, id_col)?.to_owned();
            let probs = prob_cols
                .iter()
                .map(|&c| table.parse_f64(*line, record, c))
                .collect::<Result<Vec<_>>>()?;
            let probs = ProbabilitySimplex::new(probs)
                .map_err(|e| table.error(*line, prob_cols[0], format!("row `{id}`: {e}")))?;
            if let Some(prev) = seen.insert(id.clone(), *line) {
                return Err(table.error(*line, id_col, format!("duplicate id `{id}` (first seen on line {prev})")));
            }
            rows.push((id, probs));
        }
        Self::from_rows(rows)
    }

    /// Writes the CSV form; values use shortest round-trip formatting.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(create_file(path)?);
        let io_err = |source| Error::Io {
            path: path.to_owned(),
            source,
        };
        let header: Vec<String> = std::iter::once("id".to_owned())
            .chain((1..=self.num_domains).map(|k| format!("p_{k}")))
            .collect();
        writeln!(out, "{}", header.join(",")).map_err(io_err)?;
        for id in &self.order {
            let mut line = id.clone();
            for p in self.rows[id].as_slice() {
                line.push(',');
                line.push_str(&p.to_string());
            }
            writeln!(out, "{line}").map_err(io_err)?;
        }
        out.flush().map_err(io_err)
    }

    pub fn ids(&self) -> &[String] {
        &self.order
    }

    pub fn get(&self, id: &str) -> Result<&ProbabilitySimplex> {
        self.rows.get(id).ok_or_else(|| Error::UnknownId(id.to_owned()))
    }
}

impl DomainClassifier for TableClassifier {
    type Input = String;

    fn num_domains(&self) -> usize {
        self.num_domains
    }

    fn classify(&self, input: &String) -> Result<ProbabilitySimplex> {
        self.get(input).cloned()
    }
}

pub fn table_classifier(rows: Vec<(String, ProbabilitySimplex)>) -> Result<TableClassifier> {
    TableClassifier::from_rows(rows)
}

fn predictions<C: DomainClassifier>(
    classifier: &C,
    sample: &[(C::Input, usize)],
) -> Result<Vec<(ProbabilitySimplex, usize)>> {
    sample
        .iter()
        .map(|(x, d)| Ok((classifier.classify(x)?, *d)))
        .collect()
}

/// L-infinity gap between the mean prediction and the empirical domain
/// frequencies of a sample drawn from one environment.
pub fn multiaccuracy_error<C: DomainClassifier>(classifier: &C, sample: &[(C::Input, usize)]) -> Result<f64> {
    multiaccuracy_error_from_predictions(&predictions(classifier, sample)?)
}

/// Sample-weighted mean, over equal-width bins of top-domain confidence, of
/// the within-bin gap between mean prediction and domain frequencies.
pub fn multicalibration_error<C: DomainClassifier>(
    classifier: &C,
    sample: &[(C::Input, usize)],
    bins: usize,
) -> Result<f64> {
    multicalibration_error_from_predictions(&predictions(classifier, sample)?, bins)
}

fn level_set_gap(preds: &[&(ProbabilitySimplex, usize)], k: usize) -> Result<f64> {
    let mut mean_pred = vec![0.0; k];
    let mut freq = vec![0.0; k];
    for (p, d) in preds {
        if p.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: p.len(),
                context: "diagnostic predictions",
            });
        }
        if *d >= k {
            return domain(format!("true domain {d} out of range for {k} domains"));
        }
        for (acc, v) in mean_pred.iter_mut().zip(p.as_slice()) {
            *acc += v;
        }
        freq[*d] += 1.0;
    }
    let n = preds.len() as f64;
    Ok(mean_pred
        .iter()
        .zip(&freq)
        .map(|(m, f)| (m / n - f / n).abs())
        .fold(0.0, f64::max))
}

pub fn multiaccuracy_error_from_predictions(preds: &[(ProbabilitySimplex, usize)]) -> Result<f64> {
    if preds.is_empty() {
        return domain("diagnostic sample is empty");
    }
    let refs: Vec<_> = preds.iter().collect();
    level_set_gap(&refs, preds[0].0.len())
}

pub fn multicalibration_error_from_predictions(
    preds: &[(ProbabilitySimplex, usize)],
    bins: usize,
) -> Result<f64> {
    if bins < 1 {
        return domain("need at least one bin");
    }
    if preds.is_empty() {
        return domain("diagnostic sample is empty");
    }
    let k = preds[0].0.len();
    let mut level_sets: Vec<Vec<&(ProbabilitySimplex, usize)>> = vec![Vec::new(); bins];
    for entry in preds {
        let confidence = entry.0.argmax().1;
        let bin = ((confidence * bins as f64) as usize).min(bins - 1);
        level_sets[bin].push(entry);
    }
    let mut total = 0.0;
    for set in level_sets.iter().filter(|s| !s.is_empty()) {
        total += set.len() as f64 * level_set_gap(set, k)?;
    }
    Ok(total / preds.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn line_scenario(means: &[f64], prior: &[f64]) -> GaussianMixtureScenario {
        GaussianMixtureScenario::new(
            means.iter().map(|&m| FeatureVector::new(vec![m]).unwrap()).collect(),
            1.0,
            vec![ScoreDistribution::Uniform { low: 0.0, high: 1.0 }; means.len()],
            ProbabilitySimplex::new(prior.to_vec()).unwrap(),
        )
        .unwrap()
    }

    fn x(v: f64) -> FeatureVector {
        FeatureVector::new(vec![v]).unwrap()
    }

    #[test]
    fn bayes_oracle_examples() {
        let s = line_scenario(&[-1.0, 1.0], &[0.5, 0.5]);
        let p = bayes_oracle(&s, &x(0.0)).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15);

        let s = line_scenario(&[-1.0, 1.0], &[1.0, 0.0]);
        for v in [-3.0, 0.0, 7.5] {
            assert_eq!(bayes_oracle(&s, &x(v)).unwrap().as_slice(), &[1.0, 0.0]);
        }

        // likelihood ratio exp(-(0-0)^2/2) / exp(-(0-2)^2/2) = e^2
        let s = line_scenario(&[0.0, 2.0], &[0.5, 0.5]);
        let expected = 1.0 / (1.0 + (-2.0f64).exp());
        let p = bayes_oracle(&s, &x(0.0)).unwrap();
        assert!((p[0] - expected).abs() < 1e-12);
        assert!((p[0] - 0.8808).abs() < 1e-4);

        assert!(FeatureVector::new(vec![f64::NAN]).is_err());
        assert!(bayes_oracle(&s, &FeatureVector::new(vec![0.0, 1.0]).unwrap()).is_err());
    }

    #[test]
    fn softmax_ignores_common_shift() {
        let logits = [-3.0, 0.5, 2.0, -700.0];
        let shifted: Vec<f64> = logits.iter().map(|l| l + 123.25).collect();
        let a = softmax_simplex(&logits);
        let b = softmax_simplex(&shifted);
        for (u, v) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn scenario_validation() {
        let dup = GaussianMixtureScenario::new(
            vec![x(1.0), x(1.0)],
            1.0,
            vec![ScoreDistribution::Uniform { low: 0.0, high: 1.0 }; 2],
            ProbabilitySimplex::uniform(2).unwrap(),
        );
        assert!(dup.is_err());
        let bad_sigma = GaussianMixtureScenario::new(
            vec![x(0.0), x(1.0)],
            0.0,
            vec![ScoreDistribution::Uniform { low: 0.0, high: 1.0 }; 2],
            ProbabilitySimplex::uniform(2).unwrap(),
        );
        assert!(bad_sigma.is_err());
    }

    fn adversarial_sample(n: usize, rng: &mut ChaCha8Rng) -> Vec<ScoredPoint> {
        (0..n)
            .map(|i| {
                let domain = i % 2;
                let u: f64 = rng.random();
                ScoredPoint {
                    score: domain as f64 + u,
                    domain,
                }
            })
            .collect()
    }

    #[test]
    fn adversarial_gamma_one_is_truth() {
        let c = adversarial_gamma_classifier(1.0, 0.1, 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for p in adversarial_sample(1000, &mut rng) {
            assert_eq!(c.predict(&p), p.domain);
        }
        assert!(adversarial_gamma_classifier(1.1, 0.1, 0).is_err());
        assert!(adversarial_gamma_classifier(-0.1, 0.1, 0).is_err());
    }

    #[test]
    fn adversarial_gamma_accuracy_matches() {
        let c = adversarial_gamma_classifier(0.8, 0.1, 99).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sample = adversarial_sample(20_000, &mut rng);
        for d in 0..2 {
            let pts: Vec<_> = sample.iter().filter(|p| p.domain == d).collect();
            let acc = pts.iter().filter(|p| c.predict(p) == d).count() as f64 / pts.len() as f64;
            assert!((acc - 0.8).abs() < 0.02, "domain {d} accuracy {acc}");
        }
        // all domain-1 mistakes sit below its 0.9 quantile (score 1.9)
        assert!(sample
            .iter()
            .filter(|p| p.domain == 1 && c.predict(p) == 0)
            .all(|p| p.score < 1.9));
    }

    #[test]
    fn table_lookup_and_validation() {
        let t = table_classifier(vec![("0".into(), ProbabilitySimplex::new(vec![1.0]).unwrap())]).unwrap();
        assert_eq!(t.classify(&"0".to_owned()).unwrap().as_slice(), &[1.0]);
        assert!(matches!(t.classify(&"1".to_owned()), Err(Error::UnknownId(_))));
        let p = ProbabilitySimplex::uniform(2).unwrap();
        assert!(table_classifier(vec![("a".into(), p.clone()), ("a".into(), p)]).is_err());
    }

    #[test]
    fn table_csv_round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![
            ("a".to_owned(), ProbabilitySimplex::new(vec![0.1, 0.2, 0.7]).unwrap()),
            ("b".to_owned(), ProbabilitySimplex::new(vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]).unwrap()),
            ("c".to_owned(), ProbabilitySimplex::new(vec![0.0, 0.123456789012345, 0.876543210987655]).unwrap()),
        ];
        let t = table_classifier(rows).unwrap();
        let path = dir.path().join("clf.csv");
        t.save(&path).unwrap();
        let back = TableClassifier::load(&path).unwrap();
        assert_eq!(back, t);
        for id in t.ids() {
            let a = t.get(id).unwrap().as_slice();
            let b = back.get(id).unwrap().as_slice();
            assert!(a.iter().zip(b).all(|(u, v)| u.to_bits() == v.to_bits()));
        }
        let path2 = dir.path().join("clf2.csv");
        back.save(&path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn table_load_rejects_bad_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "id,p_1,p_2\nx,0.5,0.48\n").unwrap();
        let err = TableClassifier::load(&path).unwrap_err();
        assert!(matches!(err, Error::Format { line: 2, .. }), "{err}");
        std::fs::write(&path, "id,p_1,p_2\nx,0.5,0.5\nx,0.4,0.6\n").unwrap();
        let err = TableClassifier::load(&path).unwrap_err().to_string();
        assert!(err.contains("duplicate id"), "{err}");
        let json = dir.path().join("t.json");
        std::fs::write(&json, r#"[{"id":"q","probs":[0.25,0.75]}]"#).unwrap();
        let t = TableClassifier::load(&json).unwrap();
        assert_eq!(t.get("q").unwrap().as_slice(), &[0.25, 0.75]);
    }

    fn const_preds(p: &[f64], domains: &[usize]) -> Vec<(ProbabilitySimplex, usize)> {
        domains
            .iter()
            .map(|&d| (ProbabilitySimplex::new(p.to_vec()).unwrap(), d))
            .collect()
    }

    #[test]
    fn multiaccuracy_examples() {
        let domains: Vec<usize> = (0..100).map(|i| i % 2).collect();
        let constant = const_preds(&[1.0, 0.0], &domains);
        assert!((multiaccuracy_error_from_predictions(&constant).unwrap() - 0.5).abs() < 1e-12);
        let freq = const_preds(&[0.5, 0.5], &domains);
        assert_eq!(multiaccuracy_error_from_predictions(&freq).unwrap(), 0.0);
        assert!(multiaccuracy_error_from_predictions(&[]).is_err());
    }

    #[test]
    fn multicalibration_single_bin_is_multiaccuracy() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let preds: Vec<_> = (0..500)
            .map(|_| {
                let p: f64 = rng.random();
                let d = usize::from(rng.random::<f64>() < 0.3);
                (ProbabilitySimplex::new(vec![p, 1.0 - p]).unwrap(), d)
            })
            .collect();
        let ma = multiaccuracy_error_from_predictions(&preds).unwrap();
        let mc = multicalibration_error_from_predictions(&preds, 1).unwrap();
        assert!((ma - mc).abs() < 1e-12);
        assert!(ma <= multicalibration_error_from_predictions(&preds, 10).unwrap() + 1e-12);
        assert!(multicalibration_error_from_predictions(&preds, 0).is_err());
    }

    #[test]
    fn multicalibration_of_calibrated_predictions_is_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let preds: Vec<_> = (0..10_000)
            .map(|_| {
                let p: f64 = rng.random();
                let d = usize::from(rng.random::<f64>() >= p);
                (ProbabilitySimplex::new(vec![p, 1.0 - p]).unwrap(), d)
            })
            .collect();
        let mc = multicalibration_error_from_predictions(&preds, 10).unwrap();
        assert!(mc < 0.02, "{mc}");
    }

    #[test]
    fn multicalibration_flags_overconfidence() {
        // always certain of domain 0, right 70% of the time
        let domains: Vec<usize> = (0..1000).map(|i| usize::from(i % 10 >= 7)).collect();
        let preds = const_preds(&[1.0, 0.0], &domains);
        let mc = multicalibration_error_from_predictions(&preds, 10).unwrap();
        assert!((mc - 0.3).abs() < 1e-12);
    }
}
