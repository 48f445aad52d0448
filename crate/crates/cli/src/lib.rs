//! Library surface of the `suiterank` binary.
//!
//! Everything the binary does lives here so integration tests can drive
//! the same code paths directly: config loading and validation, dataset
//! discovery with the leakage check, and the subcommand implementations.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;

pub use config::PipelineConfig;
pub use error::{CliError, Result};
