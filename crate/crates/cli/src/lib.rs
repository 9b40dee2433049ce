//! Library half of the `hamflow` command-line tool: config files, the
//! subcommands, figure reproductions and the oracle self-test.

pub mod commands;
pub mod config;
pub mod error;
pub mod repro;
pub mod selftest;

pub use error::{CliError, CliResult};
