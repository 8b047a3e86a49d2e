//! Implementation behind the `spatrisk` binary: flag grammar, run
//! configuration, table rendering and the command bodies. Kept as a
//! library so integration tests can drive commands without spawning
//! processes and can round-trip the config echo.

pub mod commands;
pub mod config;
pub mod output;

use thiserror::Error;

/// Failures are split by exit code: configuration problems (exit 2)
/// are detected before any computation starts, numeric failures
/// (exit 3) happen while computing. Output transport problems keep
/// the generic exit 1.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Numeric(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;
