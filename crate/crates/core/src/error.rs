use thiserror::Error;

/// Errors raised by the factorization library.
#[derive(Debug, Error)]
pub enum NmfError {
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("empty matrix ({rows}x{cols})")]
    Empty { rows: usize, cols: usize },

    #[error("{op}: shape mismatch, expected {expected}, got {got}")]
    ShapeMismatch { op: &'static str, expected: String, got: String },

    #[error("SVD did not converge for a {rows}x{cols} matrix")]
    SvdNoConvergence { rows: usize, cols: usize },

    #[error("rank deficient: {what} has rank {rank}, needs {needed}")]
    RankDeficient { what: &'static str, rank: usize, needed: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no closed form for {0}; use gcc_from_samples")]
    NoClosedForm(&'static str),

    #[error("{count} entries outside [0, 1] (first offenders: {offenders:?})")]
    OutOfUnitRange { count: usize, offenders: Vec<(usize, usize, f64)> },

    #[error("{0}")]
    NegativeInput(String),

    #[error("diverged at stage {stage}, iteration {iter}: |entry| = {magnitude:e}")]
    Diverged { stage: usize, iter: usize, magnitude: f64 },

    #[error("update recurrence precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, NmfError>;
