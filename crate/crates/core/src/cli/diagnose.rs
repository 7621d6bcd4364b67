use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::data::read_sample;
use super::emit;
use crate::classifiers::{multiaccuracy_error_from_predictions, multicalibration_error_from_predictions, TableClassifier};
use crate::error::{domain, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticRow {
    pub env: String,
    pub n: usize,
    pub multiaccuracy: f64,
    pub multicalibration: f64,
}

/// Multiaccuracy and multicalibration errors of a tabulated classifier on
/// each environment tag of a labelled sample.
pub fn cmd_diagnose(
    classifier_path: &Path,
    sample_path: &Path,
    bins: usize,
    out: &mut dyn Write,
) -> Result<Vec<DiagnosticRow>> {
    if bins == 0 {
        return domain("--bins must be at least 1");
    }
    let classifier = TableClassifier::load(classifier_path)?;
    let sample = read_sample(sample_path)?;
    let mut rows = Vec::with_capacity(sample.len());
    for (env, points) in &sample {
        let preds = points
            .iter()
            .map(|p| Ok((classifier.get(&p.id)?.clone(), p.domain)))
            .collect::<Result<Vec<_>>>()?;
        rows.push(DiagnosticRow {
            env: env.clone(),
            n: preds.len(),
            multiaccuracy: multiaccuracy_error_from_predictions(&preds)?,
            multicalibration: multicalibration_error_from_predictions(&preds, bins)?,
        });
    }
    emit(out, format_args!("env\tn\tmultiaccuracy\tmulticalibration"))?;
    for r in &rows {
        emit(out, format_args!("{}\t{}\t{}\t{}", r.env, r.n, r.multiaccuracy, r.multicalibration))?;
    }
    Ok(rows)
}
