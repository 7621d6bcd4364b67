//! Conformal prediction under subpopulation shift.
//!
//! Calibration data come from `K` domains; test data come from an unknown
//! mixture of them. The crate provides nonconformity scores, the
//! group-weighted threshold driven by a domain classifier's mixture
//! estimate, a similarity-weighted variant that needs no domain labels,
//! recall-targeted risk control, classifier diagnostics, and a seeded Monte
//! Carlo harness with a CLI on top.

pub mod classifiers;
pub mod cli;
pub mod conformal;
pub mod error;
pub mod exec;
pub(crate) mod io;
pub mod quantile;
pub mod scores;
pub mod simplex;
pub mod simulation;

pub use error::{Error, Result};
pub use exec::Execution;
pub use quantile::{Direction, ThresholdRule};
pub use simplex::ProbabilitySimplex;
