//! Command implementations behind the `shiftcal` binary: config loading,
//! dataset readers, and the `sweep`, `calibrate`, `diagnose` and `theorem1`
//! commands. Commands write human-readable output to the writer they are
//! given and data files to disk.

mod calibrate;
mod config;
mod data;
mod diagnose;
mod json;
mod sweep;
mod theorem1;

pub use calibrate::{cmd_calibrate, CalibrationReport, MethodThresholds, PointThreshold};
pub use config::load_config;
pub use data::{read_embeddings, read_sample, read_scores, SampleRow, ScoreRow, Split};
pub use diagnose::{cmd_diagnose, DiagnosticRow};
pub use json::JsonF64;
pub use sweep::{cmd_sweep, SweepOutcome, SUMMARY_FILE, TRIALS_FILE};
pub use theorem1::cmd_theorem1;

use std::io::Write;

use crate::error::{Error, Result};

fn emit(out: &mut dyn Write, line: std::fmt::Arguments<'_>) -> Result<()> {
    writeln!(out, "{line}").map_err(|source| Error::Io {
        path: "<stdout>".into(),
        source,
    })
}
