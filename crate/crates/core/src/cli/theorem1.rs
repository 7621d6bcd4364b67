use std::io::Write;

use super::emit;
use crate::error::Result;
use crate::simulation::{seeded_rng, theorem1_scenario, Theorem1Report};

/// Runs the adversarial two-domain construction and prints the measured
/// coverage next to the bound `max(0, gamma - alpha)`.
pub fn cmd_theorem1(
    gamma: f64,
    alpha: f64,
    n_cal: usize,
    n_test: usize,
    seed: u64,
    out: &mut dyn Write,
) -> Result<Theorem1Report> {
    let r = theorem1_scenario(gamma, alpha, n_cal, n_test, &mut seeded_rng(seed))?;
    let lines = [
        ("gamma", r.gamma.to_string()),
        ("alpha", r.alpha.to_string()),
        ("n_cal", r.n_cal.to_string()),
        ("n_test", r.n_test.to_string()),
        ("classifier_accuracy", format!("{} {}", r.classifier_accuracy[0], r.classifier_accuracy[1])),
        ("thresholds", format!("{} {}", r.thresholds[0], r.thresholds[1])),
        ("domain1_coverage", r.domain_coverage[0].to_string()),
        ("domain2_coverage", r.domain_coverage[1].to_string()),
        ("bound_max(0,gamma-alpha)", r.bound.to_string()),
        ("overall_coverage", r.overall_coverage.to_string()),
    ];
    for (k, v) in lines {
        emit(out, format_args!("{k}\t{v}"))?;
    }
    Ok(r)
}
