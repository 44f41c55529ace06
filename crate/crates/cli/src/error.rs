//! Failure classes and their process exit codes.

use pipescope_core::Error;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad input files, flags or settings; exit code 2.
    #[error("{0}")]
    Config(String),
    /// The numerics broke down; exit code 3.
    #[error("{0}")]
    Numeric(String),
    /// A requested reconstruction point lies beyond the waves' reach; exit code 4.
    #[error("{0}")]
    BeyondReach(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::BeyondReach(_) => 4,
        }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Config(format!("{}: {e}", path.display()))
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::ActionTimeExceedsTau { .. } => CliError::BeyondReach(e.to_string()),
            Error::SingularSystem | Error::HorizonTooLarge(_) | Error::OutOfRange(_) => {
                CliError::Numeric(e.to_string())
            }
            _ => CliError::Config(e.to_string()),
        }
    }
}
