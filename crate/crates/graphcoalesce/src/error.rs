use std::path::PathBuf;

use thiserror::Error;

/// Failures surfaced by the command line, each mapped to an exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid input: {0}")]
    Invalid(String),
    /// Rejected input detected by the numerical core.
    #[error("{0}")]
    Validation(graphcoalesce_core::Error),
    /// Numerical failure inside a solver.
    #[error("numerical failure: {0}")]
    Numerical(graphcoalesce_core::Error),
    /// A property check or convergence requirement failed.
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// 1 for property or convergence failures, 2 for I/O and validation.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(_) | CliError::Failed(_) => 1,
            _ => 2,
        }
    }
}

impl From<graphcoalesce_core::Error> for CliError {
    fn from(e: graphcoalesce_core::Error) -> Self {
        use graphcoalesce_core::Error as E;
        match e {
            E::NonFiniteIterate | E::IndefiniteInput { .. } | E::ZeroMatrix | E::DegenerateInput { .. } => {
                CliError::Numerical(e)
            }
            _ => CliError::Validation(e),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
