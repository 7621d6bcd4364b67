use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::data::{read_embeddings, read_scores, ScoreRow, Split};
use super::{emit, load_config, JsonF64};
use crate::classifiers::{FeatureVector, TableClassifier};
use crate::conformal::{
    batch_mixture_estimate, risk_control_threshold_directed, similarity_point_masses, weighted_risk_control_threshold,
    FlatCalibrationSet,
};
use crate::error::{Error, Result};
use crate::io::create_file;
use crate::quantile::{
    group_weighted_threshold, max_threshold, standard_cp_threshold_directed, weighted_pointmass_quantile, Direction,
    GroupedCalibrationSet, ThresholdRule,
};
use crate::simulation::Method;

pub const CALIBRATION_FILE: &str = "calibration.json";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointThreshold {
    pub id: String,
    pub threshold: JsonF64,
    /// Covered (coverage methods) or flagged (risk methods), when the test
    /// row carries a score.
    pub hit: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodThresholds {
    pub method: Method,
    pub alpha: f64,
    /// `coverage` or `recall`; risk methods target recall `1 - alpha`.
    pub target: &'static str,
    /// Set for methods with one threshold for the whole test set.
    pub threshold: Option<JsonF64>,
    pub per_point: Vec<PointThreshold>,
    /// Fraction of scored test rows covered (or flagged).
    pub empirical: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub format_version: u32,
    pub direction: Direction,
    pub calibration_points: usize,
    pub test_points: usize,
    pub domains: Option<usize>,
    pub results: Vec<MethodThresholds>,
}

enum Rules {
    Shared(ThresholdRule),
    PerPoint(Vec<ThresholdRule>),
}

/// Calibrates every configured method and alpha on a scores file, prints a
/// table and writes `calibration.json` into the config's `output` directory
/// (default: next to the config). Returns the report and its path.
pub fn cmd_calibrate(
    config_path: &Path,
    scores_path: &Path,
    classifier_path: Option<&Path>,
    embeddings_path: Option<&Path>,
    out: &mut dyn Write,
) -> Result<(CalibrationReport, PathBuf)> {
    let cfg = load_config(config_path)?;
    let dir = cfg.direction.ok_or_else(|| {
        Error::Config(
            "calibrate needs an explicit score direction: set direction = \"higher\" or \"lower\" (which end is less conforming)"
                .into(),
        )
    })?;
    if cfg.methods.contains(&Method::Oracle) {
        return Err(Error::Config(
            "method oracle needs the true test environment and is only available in sweep".into(),
        ));
    }
    let needs_domains = cfg.methods.iter().any(|m| matches!(m, Method::Max | Method::A1 | Method::A2));
    let needs_classifier = cfg.methods.iter().any(|m| matches!(m, Method::A1 | Method::A2));
    let needs_test = cfg
        .methods
        .iter()
        .any(|m| matches!(m, Method::A1 | Method::A2 | Method::A3 | Method::RiskSimilarity));
    let needs_embeddings = cfg.methods.iter().any(|m| matches!(m, Method::A3 | Method::RiskSimilarity));

    let rows = read_scores(scores_path, &cfg.scores)?;
    let (cal, test): (Vec<&ScoreRow>, Vec<&ScoreRow>) = rows.iter().partition(|r| r.split == Split::Calibration);
    if cal.is_empty() {
        return Err(Error::Config(format!("{} has no calibration rows", scores_path.display())));
    }
    if needs_test && test.is_empty() {
        return Err(Error::Config(format!(
            "methods a1, a2, a3 and risk_similarity need test rows (split = test) in {}",
            scores_path.display()
        )));
    }
    let cal_scores: Vec<f64> = cal.iter().map(|r| r.score.expect("calibration rows carry scores")).collect();

    let grouped = if needs_domains {
        Some(group_by_domain(&cal, dir)?)
    } else {
        None
    };
    let classifier = match classifier_path {
        Some(p) => Some(TableClassifier::load(p)?),
        None if needs_classifier => {
            return Err(Error::Config(
                "methods a1 and a2 need --classifier FILE with domain probabilities (id,p_1..p_K) for every test id"
                    .into(),
            ))
        }
        None => None,
    };
    if let (Some(c), Some(g)) = (&classifier, &grouped) {
        if needs_classifier && crate::classifiers::DomainClassifier::num_domains(c) != g.num_domains() {
            return Err(Error::DimensionMismatch {
                expected: g.num_domains(),
                got: crate::classifiers::DomainClassifier::num_domains(c),
                context: "classifier domains vs calibration domains",
            });
        }
    }
    let masses = if needs_embeddings {
        let lookup = embeddings_path.map(read_embeddings).transpose()?;
        let embed = |r: &ScoreRow| -> Result<FeatureVector> {
            match (&r.embedding, &lookup) {
                (Some(e), _) => Ok(e.clone()),
                (None, Some(map)) => map.get(&r.id).cloned().ok_or_else(|| Error::UnknownId(r.id.clone())),
                (None, None) => Err(Error::Config(
                    "methods a3 and risk_similarity need embeddings: inline e_1..e_d columns or --embeddings FILE"
                        .into(),
                )),
            }
        };
        let flat = FlatCalibrationSet::with_direction(
            cal_scores.clone(),
            cal.iter().map(|r| embed(r)).collect::<Result<_>>()?,
            dir,
        )?;
        Some(
            test.iter()
                .map(|r| similarity_point_masses(&flat, &embed(r)?, &cfg.algorithm3))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    let test_ids: Vec<String> = test.iter().map(|r| r.id.clone()).collect();

    let mut results = Vec::new();
    for &method in &cfg.methods {
        for &alpha in &cfg.alphas {
            let grouped_ref = || grouped.as_ref().expect("domains checked");
            let rules = match method {
                Method::Unweighted => Rules::Shared(standard_cp_threshold_directed(&cal_scores, alpha, dir)?),
                Method::Max => Rules::Shared(max_threshold(grouped_ref(), alpha)?),
                Method::A1 => {
                    let c = classifier.as_ref().expect("classifier checked");
                    Rules::PerPoint(
                        test_ids
                            .iter()
                            .map(|id| group_weighted_threshold(grouped_ref(), c.get(id)?, alpha))
                            .collect::<Result<_>>()?,
                    )
                }
                Method::A2 => {
                    let c = classifier.as_ref().expect("classifier checked");
                    let lambda = batch_mixture_estimate(c, &test_ids)?;
                    Rules::Shared(group_weighted_threshold(grouped_ref(), &lambda, alpha)?)
                }
                Method::A3 => Rules::PerPoint(
                    masses
                        .as_deref()
                        .expect("embeddings checked")
                        .iter()
                        .map(|pm| Ok(ThresholdRule::new(weighted_pointmass_quantile(pm, 1.0 - alpha)?, dir)))
                        .collect::<Result<_>>()?,
                ),
                Method::RiskUnweighted => Rules::Shared(risk_control_threshold_directed(&cal_scores, 1.0 - alpha, dir)?),
                Method::RiskSimilarity => Rules::PerPoint(
                    masses
                        .as_deref()
                        .expect("embeddings checked")
                        .iter()
                        .map(|pm| weighted_risk_control_threshold(pm, 1.0 - alpha, dir))
                        .collect::<Result<_>>()?,
                ),
                Method::Oracle | Method::Theorem1Adversarial => unreachable!("rejected above"),
            };
            results.push(summarize(method, alpha, &rules, &test));
        }
    }

    let report = CalibrationReport {
        format_version: 1,
        direction: dir,
        calibration_points: cal.len(),
        test_points: test.len(),
        domains: grouped.as_ref().map(GroupedCalibrationSet::num_domains),
        results,
    };
    let dir_out = cfg
        .output
        .clone()
        .unwrap_or_else(|| config_path.parent().map(Path::to_path_buf).unwrap_or_default());
    std::fs::create_dir_all(&dir_out).map_err(|source| Error::Io {
        path: dir_out.clone(),
        source,
    })?;
    let path = dir_out.join(CALIBRATION_FILE);
    let mut file = std::io::BufWriter::new(create_file(&path)?);
    serde_json::to_writer_pretty(&mut file, &report)?;
    writeln!(file)
        .and_then(|_| file.flush())
        .map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;

    emit(out, format_args!("method\talpha\tthreshold\tempirical"))?;
    for r in &report.results {
        let threshold = match r.threshold {
            Some(t) => t.0.to_string(),
            None => format!("per-point ({} test rows)", r.per_point.len()),
        };
        let empirical = r.empirical.map_or("-".to_owned(), |e| e.to_string());
        emit(out, format_args!("{}\t{}\t{threshold}\t{empirical}", r.method, r.alpha))?;
    }
    emit(out, format_args!("report written to {}", path.display()))?;
    Ok((report, path))
}

fn group_by_domain(cal: &[&ScoreRow], dir: Direction) -> Result<GroupedCalibrationSet> {
    let mut groups: Vec<Vec<f64>> = Vec::new();
    for r in cal {
        let k = r.domain.ok_or_else(|| {
            Error::Config(format!(
                "methods max, a1 and a2 need a `domain` on every calibration row; row `{}` (line {}) has none",
                r.id, r.line
            ))
        })?;
        if groups.len() <= k {
            groups.resize(k + 1, Vec::new());
        }
        groups[k].push(r.score.expect("calibration rows carry scores"));
    }
    if let Some(k) = groups.iter().position(Vec::is_empty) {
        return Err(Error::Config(format!("domain {k} has no calibration rows")));
    }
    GroupedCalibrationSet::with_direction(groups, dir)
}

fn summarize(method: Method, alpha: f64, rules: &Rules, test: &[&ScoreRow]) -> MethodThresholds {
    let rule_at = |i: usize| match rules {
        Rules::Shared(r) => r,
        Rules::PerPoint(rs) => &rs[i],
    };
    let hit = |i: usize, s: f64| {
        let inside = rule_at(i).contains(s);
        if method.is_risk() {
            !inside
        } else {
            inside
        }
    };
    let scored: Vec<bool> = test
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.score.map(|s| hit(i, s)))
        .collect();
    let empirical = (!scored.is_empty()).then(|| scored.iter().filter(|&&h| h).count() as f64 / scored.len() as f64);
    let per_point = match rules {
        Rules::Shared(_) => Vec::new(),
        Rules::PerPoint(rs) => test
            .iter()
            .zip(rs)
            .enumerate()
            .map(|(i, (r, rule))| PointThreshold {
                id: r.id.clone(),
                threshold: JsonF64(rule.threshold()),
                hit: r.score.map(|s| hit(i, s)),
            })
            .collect(),
    };
    MethodThresholds {
        method,
        alpha,
        target: if method.is_risk() { "recall" } else { "coverage" },
        threshold: match rules {
            Rules::Shared(r) => Some(JsonF64(r.threshold())),
            Rules::PerPoint(_) => None,
        },
        per_point,
        empirical,
    }
}
