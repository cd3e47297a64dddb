use std::path::Path;
use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("invariant breach: {0}")]
    Breach(String),

    #[error("I/O error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Config(_) => 2,
            CliError::Breach(_) => 3,
            CliError::Io(_) => 4,
        })
    }

    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl From<tvlr_core::Error> for CliError {
    fn from(e: tvlr_core::Error) -> Self {
        match e {
            tvlr_core::Error::Integration { .. } => CliError::Breach(e.to_string()),
            tvlr_core::Error::Csv(_) => CliError::Io(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
