//! Command-line surface: config parsing, manifests, CSV output and the
//! `modulate`, `prcheck`, `train` and `ablate` commands.

mod commands;
pub mod config;
pub mod output;

pub use commands::{run, Cli, CliError, Command, EXIT_BAD_INPUT, EXIT_DIAGNOSTIC, EXIT_OK, PR_TOLERANCE};
