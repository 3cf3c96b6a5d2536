//! Experiment runner for `nlmarkov`: TOML experiment files, CSV and binary
//! archive formats, run manifests and the `nlmarkov` command-line tool.

pub mod config;
mod error;
pub mod formats;
pub mod report;
pub mod runner;

pub use config::{ConfigError, ExperimentConfig, TestKind};
pub use error::{Error, Result};
pub use nlmarkov;
pub use report::Report;
pub use runner::{run_experiment, Experiment, RunOutcome, EXIT_FAIL, EXIT_PASS, EXIT_SETUP};
