//! Runs one experiment configuration and emits CSV.
//!
//! Exit status: 0 on success, 2 for configuration errors, 3 for numerical
//! failures, 4 for I/O errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use lsas::harness::{
    parse_config, render_csv, run_experiment, write_atomic, ConfigError, HarnessError,
};

#[derive(Debug, Parser)]
#[command(
    version,
    about = "Run a large-scale antenna system experiment and write CSV results"
)]
struct Args {
    /// Experiment configuration (TOML).
    config: PathBuf,
    /// Seed override; takes precedence over `rng_seed` in the file.
    #[arg(long)]
    seed: Option<u64>,
    /// Trial count override; takes precedence over `num_trials` in the file.
    #[arg(long)]
    trials: Option<usize>,
    /// CSV destination; overrides `output` in the file. Without either, CSV
    /// goes to stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn run(args: Args) -> Result<(), HarnessError> {
    let text = std::fs::read_to_string(&args.config).map_err(|source| HarnessError::Io {
        path: args.config.clone(),
        source,
    })?;
    let mut spec = parse_config(&text)?;
    if let Some(seed) = args.seed {
        spec.scenario.rng_seed = seed;
    }
    if let Some(trials) = args.trials {
        if trials == 0 {
            return Err(ConfigError {
                line: None,
                key: Some("--trials".into()),
                message: "must be at least 1".into(),
            }
            .into());
        }
        spec.scenario.num_trials = trials;
    }
    let csv = render_csv(&run_experiment(&spec)?);
    match args.output.or(spec.output) {
        Some(path) => write_atomic(&path, &csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("simulate: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
