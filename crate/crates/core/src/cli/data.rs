//! Dataset file readers. All files are CSV with a header row; `#` starts a
//! comment line.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use crate::classifiers::FeatureVector;
use crate::error::{Error, Result};
use crate::io::CsvTable;
use crate::scores::{ClassScoreSpec, ProbabilityVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Calibration,
    Test,
}

/// One row of a scores file.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub id: String,
    pub line: u64,
    pub domain: Option<usize>,
    pub split: Split,
    /// Absent only for test rows whose label is unknown.
    pub score: Option<f64>,
    pub embedding: Option<FeatureVector>,
}

/// Reads a scores file. Columns:
///
/// * `id` (required, unique);
/// * `domain` (optional, `0..K-1`) and `split` (optional, `cal` or `test`,
///   default `cal`);
/// * either `score`, or `label` (0-based) with `p_1..p_J` class
///   probabilities scored by `spec`;
/// * optional inline embedding columns `e_1..e_d`.
///
/// Calibration rows need a score; test rows may leave it empty.
pub fn read_scores(path: &Path, spec: &ClassScoreSpec) -> Result<Vec<ScoreRow>> {
    let t = CsvTable::read(path)?;
    let id_col = t.column("id").ok_or_else(|| t.error(1, 0, "missing `id` column"))?;
    let domain_col = t.column("domain");
    let split_col = t.column("split");
    let score_col = t.column("score");
    let label_col = t.column("label");
    let prob_cols = t.numbered_columns("p_");
    let emb_cols = t.numbered_columns("e_");
    if score_col.is_some() && (label_col.is_some() || !prob_cols.is_empty()) {
        return Err(t.error(1, 0, "use either a `score` column or `label` with `p_1..p_J`, not both"));
    }
    if score_col.is_none() && (label_col.is_none() || prob_cols.is_empty()) {
        return Err(t.error(1, 0, "need a `score` column, or a `label` column with `p_1..p_J`"));
    }

    let mut seen: HashMap<String, u64> = HashMap::new();
    let mut rows = Vec::with_capacity(t.rows.len());
    for (line, rec) in &t.rows {
        let line = *line;
        let id = t.field(line, rec, id_col)?.to_owned();
        if id.is_empty() {
            return Err(t.error(line, id_col, "empty id"));
        }
        if let Some(prev) = seen.insert(id.clone(), line) {
            return Err(t.error(line, id_col, format!("duplicate id `{id}` (first seen on line {prev})")));
        }
        let domain = match domain_col {
            Some(c) if !t.field(line, rec, c)?.is_empty() => Some(t.parse_usize(line, rec, c)?),
            _ => None,
        };
        let split = match split_col.map(|c| t.field(line, rec, c).map(|v| (c, v))).transpose()? {
            None | Some((_, "" | "cal" | "calibration")) => Split::Calibration,
            Some((_, "test")) => Split::Test,
            Some((c, other)) => return Err(t.error(line, c, format!("split must be `cal` or `test`, got `{other}`"))),
        };

        let score = if let Some(c) = score_col {
            if t.field(line, rec, c)?.is_empty() {
                None
            } else {
                let s = t.parse_f64(line, rec, c)?;
                if !s.is_finite() {
                    return Err(t.error(line, c, format!("row `{id}`: score must be finite")));
                }
                Some(s)
            }
        } else {
            let lc = label_col.expect("checked above");
            let probs = prob_cols
                .iter()
                .map(|&c| t.parse_f64(line, rec, c))
                .collect::<Result<Vec<_>>>()?;
            let probs = ProbabilityVector::new(probs)
                .map_err(|e| t.error(line, prob_cols[0], format!("row `{id}`: {e}")))?;
            if t.field(line, rec, lc)?.is_empty() {
                None
            } else {
                let label = t.parse_usize(line, rec, lc)?;
                Some(spec.score(&probs, label).map_err(|e| t.error(line, lc, format!("row `{id}`: {e}")))?)
            }
        };
        if score.is_none() && split == Split::Calibration {
            return Err(t.error(line, score_col.or(label_col).unwrap_or(0), format!("calibration row `{id}` has no score")));
        }

        let embedding = if emb_cols.is_empty() {
            None
        } else {
            let v = emb_cols
                .iter()
                .map(|&c| t.parse_f64(line, rec, c))
                .collect::<Result<Vec<_>>>()?;
            Some(FeatureVector::new(v).map_err(|e| t.error(line, emb_cols[0], format!("row `{id}`: {e}")))?)
        };
        rows.push(ScoreRow {
            id,
            line,
            domain,
            split,
            score,
            embedding,
        });
    }
    if rows.is_empty() {
        return Err(t.error(1, 0, "no data rows"));
    }
    Ok(rows)
}

/// Reads `id,e_1..e_d`; the dimension comes from the header.
pub fn read_embeddings(path: &Path) -> Result<HashMap<String, FeatureVector>> {
    let t = CsvTable::read(path)?;
    let id_col = t.column("id").ok_or_else(|| t.error(1, 0, "missing `id` column"))?;
    let cols = t.numbered_columns("e_");
    if cols.is_empty() {
        return Err(t.error(1, 0, "missing `e_1..e_d` columns"));
    }
    let mut out = HashMap::with_capacity(t.rows.len());
    for (line, rec) in &t.rows {
        let id = t.field(*line, rec, id_col)?.to_owned();
        let v = cols
            .iter()
            .map(|&c| t.parse_f64(*line, rec, c))
            .collect::<Result<Vec<_>>>()?;
        let v = FeatureVector::new(v).map_err(|e| t.error(*line, cols[0], format!("row `{id}`: {e}")))?;
        if out.insert(id.clone(), v).is_some() {
            return Err(t.error(*line, id_col, format!("duplicate id `{id}`")));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRow {
    pub id: String,
    pub domain: usize,
    pub env: String,
}

/// Reads a diagnostic sample `id,domain[,env]`, grouped by environment tag
/// (`all` when the column is absent).
pub fn read_sample(path: &Path) -> Result<BTreeMap<String, Vec<SampleRow>>> {
    let t = CsvTable::read(path)?;
    let id_col = t.column("id").ok_or_else(|| t.error(1, 0, "missing `id` column"))?;
    let domain_col = t.column("domain").ok_or_else(|| t.error(1, 0, "missing `domain` column"))?;
    let env_col = t.column("env");
    let mut out: BTreeMap<String, Vec<SampleRow>> = BTreeMap::new();
    for (line, rec) in &t.rows {
        let env = match env_col {
            Some(c) => t.field(*line, rec, c)?.to_owned(),
            None => "all".to_owned(),
        };
        out.entry(env.clone()).or_default().push(SampleRow {
            id: t.field(*line, rec, id_col)?.to_owned(),
            domain: t.parse_usize(*line, rec, domain_col)?,
            env,
        });
    }
    if out.is_empty() {
        return Err(Error::Format {
            path: path.to_owned(),
            line: 1,
            column: 1,
            message: "no data rows".into(),
        });
    }
    Ok(out)
}
