//! Experiment harness for C3 Thompson sampling: TOML configs, parallel
//! runs over seeds, regret logs, checkpoints and the `c3` command line.

pub mod cli;
pub mod config;
pub mod error;
pub mod metrics;
pub mod persist;
pub mod runner;
pub mod studies;

pub use config::ExperimentConfig;
pub use error::HarnessError;
