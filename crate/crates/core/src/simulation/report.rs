use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::runner::{Method, TrialResult};
use crate::error::{domain, Error, Result};

pub const TRIALS_CSV_HEADER: [&str; 8] = [
    "env_id",
    "split_id",
    "method",
    "alpha",
    "coverage",
    "mean_set_size",
    "threshold",
    "recall",
];

/// Per-environment means (over splits) for one method and alpha.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentMean {
    pub env_id: usize,
    pub splits: usize,
    pub coverage: f64,
    pub mean_set_size: Option<f64>,
    pub recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryEntry {
    pub method: Method,
    pub alpha: f64,
    pub mean_coverage: f64,
    pub std_coverage: f64,
    pub min_env_coverage: f64,
    pub max_env_coverage: f64,
    pub mean_set_size: Option<f64>,
    pub mean_recall: Option<f64>,
    pub std_recall: Option<f64>,
    pub per_environment: Vec<EnvironmentMean>,
}

/// Coverage summary: splits are averaged within each environment first,
/// then mean and population standard deviation are taken across
/// environments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub format_version: u32,
    pub std_convention: String,
    pub environments: usize,
    pub splits: usize,
    pub entries: Vec<SummaryEntry>,
}

impl CoverageReport {
    pub fn entry(&self, method: Method, alpha: f64) -> Option<&SummaryEntry> {
        self.entries.iter().find(|e| e.method == method && e.alpha == alpha)
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn population_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

fn optional_mean(xs: &[Option<f64>]) -> Option<f64> {
    let v: Option<Vec<f64>> = xs.iter().copied().collect();
    v.map(|v| mean(&v))
}

pub fn aggregate(results: &[TrialResult]) -> Result<CoverageReport> {
    if results.is_empty() {
        return domain("cannot aggregate an empty result set");
    }
    if let Some(r) = results.iter().find(|r| !(r.alpha > 0.0 && r.alpha < 1.0)) {
        return domain(format!("alpha {} outside (0, 1)", r.alpha));
    }
    // alpha > 0, so its bit pattern orders like the value
    let mut cells: BTreeMap<(Method, u64), Vec<&TrialResult>> = BTreeMap::new();
    for r in results {
        cells.entry((r.method, r.alpha.to_bits())).or_default().push(r);
    }

    let mut env_ids: Vec<usize> = results.iter().map(|r| r.env_id).collect();
    env_ids.sort_unstable();
    env_ids.dedup();
    let mut split_ids: Vec<usize> = results.iter().map(|r| r.split_id).collect();
    split_ids.sort_unstable();
    split_ids.dedup();

    let entries = cells
        .into_iter()
        .map(|((method, alpha_bits), mut rows)| {
            // fixed summation order makes the report independent of input order
            rows.sort_by(|a, b| {
                (a.env_id, a.split_id)
                    .cmp(&(b.env_id, b.split_id))
                    .then(a.coverage.total_cmp(&b.coverage))
                    .then(a.threshold.total_cmp(&b.threshold))
            });
            let per_environment: Vec<EnvironmentMean> = rows
                .chunk_by(|a, b| a.env_id == b.env_id)
                .map(|chunk| EnvironmentMean {
                    env_id: chunk[0].env_id,
                    splits: chunk.len(),
                    coverage: mean(&chunk.iter().map(|r| r.coverage).collect::<Vec<_>>()),
                    mean_set_size: optional_mean(&chunk.iter().map(|r| r.mean_set_size).collect::<Vec<_>>()),
                    recall: optional_mean(&chunk.iter().map(|r| r.recall).collect::<Vec<_>>()),
                })
                .collect();
            let cov: Vec<f64> = per_environment.iter().map(|e| e.coverage).collect();
            let recalls: Option<Vec<f64>> = per_environment.iter().map(|e| e.recall).collect();
            SummaryEntry {
                method,
                alpha: f64::from_bits(alpha_bits),
                mean_coverage: mean(&cov),
                std_coverage: population_std(&cov),
                min_env_coverage: cov.iter().copied().fold(f64::INFINITY, f64::min),
                max_env_coverage: cov.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                mean_set_size: optional_mean(&per_environment.iter().map(|e| e.mean_set_size).collect::<Vec<_>>()),
                mean_recall: recalls.as_deref().map(mean),
                std_recall: recalls.as_deref().map(population_std),
                per_environment,
            }
        })
        .collect();

    Ok(CoverageReport {
        format_version: 1,
        std_convention: "population".into(),
        environments: env_ids.len(),
        splits: split_ids.len(),
        entries,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes trials with the fixed [`TRIALS_CSV_HEADER`] columns. Floats use
/// the shortest representation that parses back to the same value.
pub fn write_trials_csv<W: Write>(out: W, results: &[TrialResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRIALS_CSV_HEADER)?;
    for r in results {
        w.write_record([
            r.env_id.to_string(),
            r.split_id.to_string(),
            r.method.tag().to_string(),
            r.alpha.to_string(),
            r.coverage.to_string(),
            opt(r.mean_set_size),
            r.threshold.to_string(),
            opt(r.recall),
        ])?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

pub fn read_trials_csv<R: Read>(input: R) -> Result<Vec<TrialResult>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers()?.clone();
    if header.iter().ne(TRIALS_CSV_HEADER) {
        return domain(format!(
            "unexpected trials header `{}`",
            header.iter().collect::<Vec<_>>().join(",")
        ));
    }
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}
