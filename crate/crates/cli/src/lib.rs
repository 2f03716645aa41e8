//! Command-line driver: config parsing, archives and CSV/JSON output for the
//! `bathy` binary.

pub mod archive;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use commands::{run, Command};
pub use config::{ExperimentConfig, RawConfig};
pub use error::{exit, CliError, Result};
