//! Batch driver for constrained and optimal single-shot estimation experiments.
//!
//! A TOML [`config::ExperimentConfig`] selects the encoding, probe, prior and
//! operator bases; [`commands`] turns it into key-value reports or a CSV sweep.

pub mod basis;
pub mod commands;
pub mod config;
pub mod error;
pub mod report;

pub use commands::{cmd_oracle, cmd_solve, cmd_sweep, cmd_verify, Outcome};
pub use config::ExperimentConfig;
pub use error::CliError;
