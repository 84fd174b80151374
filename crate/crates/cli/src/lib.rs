//! Library side of the `circlebreak` binary: configuration, subcommands and
//! the acceptance checks.

pub mod check;
pub mod commands;
pub mod config;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Compute(#[from] circlebreak::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("check failed: {0}")]
    CheckFailed(String),
}

impl CliError {
    /// 1 for failed checks, 2 for bad configuration, 3 for anything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::CheckFailed(_) => 1,
            CliError::Config(_) => 2,
            _ => 3,
        }
    }
}
