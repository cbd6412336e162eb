//! Library side of the `cvqkd` command: configuration, drivers and output.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use cli::{run, Cli};
pub use config::{Format, RunConfig, Settings};
pub use error::{CliError, CliResult};
