use std::path::PathBuf;

use phasefb::ErrorKind;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] phasefb::Error),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{0}")]
    Data(String),

    #[error("{} already exists and is not empty (pass --force to overwrite)", .0.display())]
    Exists(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// 2 validation, 3 data or I/O, 4 numerical failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) => match e.kind() {
                ErrorKind::Validation => 2,
                ErrorKind::Data => 3,
                ErrorKind::Numerical => 4,
            },
            CliError::Config(_) => 2,
            CliError::Data(_) | CliError::Exists(_) | CliError::Io(_) | CliError::Json(_) => 3,
        }
    }
}
