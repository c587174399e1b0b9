//! Experiment harness for AND: declarative configs, dataset generation,
//! solver runs with streamed CSV traces, and evaluation reports.

pub mod config;
pub mod error;
pub mod experiment;
pub mod matrix_io;
pub mod trace_csv;

pub use config::{Experiment, ExperimentConfig, Preset};
pub use error::{HarnessError, Result};
