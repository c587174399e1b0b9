//! Non-negative matrix factorization by alternating non-negative gradient
//! descent (AND), with the tooling to test recovery of a planted factor:
//! weight distributions and their correlation parameters, synthetic data,
//! baseline NMF solvers and ground-truth error metrics.

pub mod baselines;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod recurrence;
pub mod rng;
pub mod solver;
pub mod synth;
pub mod trace;
pub mod weights;

pub use error::{NmfError, Result};
pub use linalg::DenseMatrix;
pub use solver::{AndConfig, BatchMode, ThresholdSchedule};
pub use trace::{RunTrace, TraceRecord};
