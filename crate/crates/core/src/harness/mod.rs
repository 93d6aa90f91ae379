//! Configuration-driven experiments with CSV output.
//!
//! A TOML file names an experiment kind, the scenario, optional RF mismatch
//! and an optional one-parameter sweep. [`run_experiment`] evaluates every
//! sweep point in order and returns long-format rows, one per metric.

mod config;
mod run;

pub use config::{
    parse_config, ConfigError, ExperimentKind, ExperimentSpec, Sweep, SweepParameter, SweepPoint,
};
pub use run::{render_csv, run_experiment, write_atomic, HarnessError, ResultRow, CSV_HEADER};
