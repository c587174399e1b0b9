use std::path::PathBuf;

use andnmf::NmfError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Validation(String),

    #[error("{path}: line {line}, column {column}: {message}")]
    Config { path: String, line: usize, column: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: byte {offset}: {message}")]
    MalformedMatrix { path: PathBuf, offset: u64, message: String },

    #[error("{path}: line {line}: {message}")]
    MalformedCsv { path: PathBuf, line: usize, message: String },

    #[error(transparent)]
    Nmf(#[from] NmfError),

    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.into(), source }
    }

    /// 1 validation, 2 runtime or divergence, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Validation(_) | HarnessError::Config { .. } => 1,
            HarnessError::Nmf(e) => match e {
                NmfError::InvalidParameter(_)
                | NmfError::OutOfUnitRange { .. }
                | NmfError::NegativeInput(_)
                | NmfError::NoClosedForm(_)
                | NmfError::ShapeMismatch { .. } => 1,
                _ => 2,
            },
            HarnessError::Json(_) => 2,
            HarnessError::Io { .. } | HarnessError::MalformedMatrix { .. } | HarnessError::MalformedCsv { .. } => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
