//! Command-line front end: configuration files, CSV input, chain orchestration and reports.

pub mod config;
pub mod error;
pub mod ingest;
pub mod report;
pub mod runner;

pub use error::{CliError, CliResult};
