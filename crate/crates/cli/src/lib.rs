//! Configuration, artifact output and subcommands of the `sqrtdiff` tool.

// `!(x > 0.0)` is how NaN gets rejected along with the bad range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use config::{load_config, parse_config, Command, RunConfig};
pub use error::CliError;
