use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use shiftcal::cli;
use shiftcal::Execution;

#[derive(Parser)]
#[command(name = "shiftcal", version, about = "Conformal calibration under subpopulation shift")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo coverage sweep; writes trials.csv and summary.json.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute thresholds for every configured method on a scores file.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        classifier: Option<PathBuf>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Multiaccuracy and multicalibration of a tabulated domain classifier.
    Diagnose {
        #[arg(long)]
        classifier: PathBuf,
        #[arg(long)]
        sample: PathBuf,
        #[arg(long)]
        bins: usize,
    },
    /// Reproduce the adversarial gamma-accurate classifier construction.
    Theorem1 {
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        n_cal: usize,
        #[arg(long)]
        n_test: usize,
        #[arg(long)]
        seed: u64,
    },
}

fn run(cmd: Command) -> shiftcal::Result<()> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match cmd {
        Command::Sweep { config, out: dir } => {
            cli::cmd_sweep(&config, dir.as_deref(), Execution::default(), &mut out)?;
        }
        Command::Calibrate {
            config,
            scores,
            classifier,
            embeddings,
        } => {
            cli::cmd_calibrate(&config, &scores, classifier.as_deref(), embeddings.as_deref(), &mut out)?;
        }
        Command::Diagnose {
            classifier,
            sample,
            bins,
        } => {
            cli::cmd_diagnose(&classifier, &sample, bins, &mut out)?;
        }
        Command::Theorem1 {
            gamma,
            alpha,
            n_cal,
            n_test,
            seed,
        } => {
            cli::cmd_theorem1(gamma, alpha, n_cal, n_test, seed, &mut out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
