//! File formats, configuration and subcommands of the `intraday-fts`
//! command-line tool.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod export;
pub mod formats;
pub mod ingest;
pub mod manifest;

pub use error::{CliError, Result};
