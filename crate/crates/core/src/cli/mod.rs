//! Batch front end: configuration files, protocol runs and result files.

pub mod config;
pub mod describe;
pub mod runner;
pub mod units;

pub use config::{parse_config, ConfigError, RunConfig};
pub use describe::describe;
pub use runner::{run, ExitStatus, ResultBundle, RunOptions, RunOutcome};
