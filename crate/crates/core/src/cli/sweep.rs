use std::io::Write;
use std::path::{Path, PathBuf};

use super::{emit, load_config};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::io::create_file;
use crate::simulation::{aggregate, run_experiment_with, write_trials_csv, CoverageReport, TrialResult};

pub const TRIALS_FILE: &str = "trials.csv";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug)]
pub struct SweepOutcome {
    pub trials: Vec<TrialResult>,
    pub report: CoverageReport,
    pub trials_path: PathBuf,
    pub summary_path: PathBuf,
}

/// Runs the configured sweep and writes `trials.csv` and `summary.json`
/// into `out_dir`, else the config's `output`, else the current directory.
pub fn cmd_sweep(
    config_path: &Path,
    out_dir: Option<&Path>,
    exec: Execution,
    out: &mut dyn Write,
) -> Result<SweepOutcome> {
    let cfg = load_config(config_path)?;
    let dir = out_dir
        .map(Path::to_path_buf)
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(|source| Error::Io {
        path: dir.clone(),
        source,
    })?;

    let trials = run_experiment_with(&cfg, exec)?;
    let report = aggregate(&trials)?;

    let trials_path = dir.join(TRIALS_FILE);
    let mut w = std::io::BufWriter::new(create_file(&trials_path)?);
    write_trials_csv(&mut w, &trials)?;
    w.flush().map_err(|source| Error::Io {
        path: trials_path.clone(),
        source,
    })?;

    let summary_path = dir.join(SUMMARY_FILE);
    let mut w = std::io::BufWriter::new(create_file(&summary_path)?);
    serde_json::to_writer_pretty(&mut w, &report)?;
    writeln!(w).and_then(|_| w.flush()).map_err(|source| Error::Io {
        path: summary_path.clone(),
        source,
    })?;

    emit(
        out,
        format_args!(
            "{} trials over {} environments x {} splits (std across environments, population)",
            trials.len(),
            report.environments,
            report.splits
        ),
    )?;
    emit(out, format_args!("method\talpha\tmean\tstd\tmin_env\tmean_set_size"))?;
    for e in &report.entries {
        emit(
            out,
            format_args!(
                "{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{}",
                e.method,
                e.alpha,
                e.mean_coverage,
                e.std_coverage,
                e.min_env_coverage,
                e.mean_set_size.map_or("-".to_owned(), |s| format!("{s:.3}"))
            ),
        )?;
    }
    emit(out, format_args!("wrote {} and {}", trials_path.display(), summary_path.display()))?;
    Ok(SweepOutcome {
        trials,
        report,
        trials_path,
        summary_path,
    })
}
