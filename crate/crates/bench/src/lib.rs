//! Experiment harness for the motion restriction controller.
//!
//! Each experiment builds its maps, runs closed-loop sessions against the
//! simulated plant and scripted users, and returns an [`ExperimentReport`]
//! whose metrics carry explicit pass/fail thresholds.

use std::path::{Path, PathBuf};

pub mod experiments;
pub mod report;
pub mod trajectories;

pub use experiments::Options;
pub use report::{Bound, ExperimentReport, Metric};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Core(#[from] gard_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("report output failed: {0}")]
    Report(String),

    #[error("unknown experiment {0:?}")]
    UnknownExperiment(String),
}

impl BenchError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        BenchError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type Result<T, E = BenchError> = std::result::Result<T, E>;
