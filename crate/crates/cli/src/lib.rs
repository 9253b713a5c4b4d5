//! Command-line front end: corpus synthesis, featurization, training,
//! evaluation, prediction and plots.

mod commands;
pub mod svg;

pub use commands::{resolve_config, run, Cli, CliError, Command, ConfigArgs};
