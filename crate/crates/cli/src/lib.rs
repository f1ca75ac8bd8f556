//! Command-line front end: run configuration, commands and output files.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use commands::{run, Cli};
pub use error::CliError;
