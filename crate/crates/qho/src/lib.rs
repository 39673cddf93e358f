//! File formats, run configuration and the `qho` command-line front end.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use error::{exit, CliError, CliResult};
