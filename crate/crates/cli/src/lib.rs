//! Configuration, orchestration and plain-text output for `cavsim`.

pub mod config;
pub mod experiment;
pub mod output;

pub use config::{parse_config, parse_config_as, ConfigError, ExperimentConfig, Format, Kind};
pub use experiment::{run_experiment, Predictions, Report, RunError};
