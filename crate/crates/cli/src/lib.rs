//! Driver for the `densflow` binary: config parsing, subcommand dispatch and
//! run artifacts.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod record;

pub use commands::{dispatch, exit_code, Outcome, Subcommand};
pub use config::{parse_config, Config};
pub use error::CliError;
