//! Command-line runner for fshe experiments: reads a TOML config, runs one
//! subcommand and writes CSV or JSON reports.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use commands::{Outcome, RunContext};
pub use config::ExperimentConfig;
pub use error::CliError;
