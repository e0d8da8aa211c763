//! Experiment configuration, execution, output and verification.

use std::path::{Path, PathBuf};

pub mod check;
pub mod config;
pub mod emit;
pub mod run;
pub mod tables;
pub mod verify;

pub use check::{check_bounds, check_configured, BoundCheck, BoundReport, RunSource, ROUNDOFF_SLACK};
pub use config::{ExperimentConfig, Format, OutputSpec, RunControls, Tolerances};
pub use emit::{emit, read_traces_csv, write_aggregates_csv, write_traces_csv, Emitted, AGGREGATE_COLUMNS, TRACE_COLUMNS};
pub use run::{aggregate, run_continuous, run_discrete, run_id, run_optimize, run_simulate, AggregatePoint, RunStatus, Trace, TraceRecord};
pub use verify::{verify, CheckOutcome, VerifyOutput, VerifyScale};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Csv { path: PathBuf, message: String },
    #[error(transparent)]
    Problem(#[from] crate::problems::ProblemError),
    #[error(transparent)]
    Continuum(#[from] crate::continuum::ContinuumError),
    #[error(transparent)]
    Theory(#[from] crate::theory::TheoryError),
    #[error(transparent)]
    Optim(#[from] crate::optimizers::OptimError),
    #[error(transparent)]
    Memory(#[from] crate::memory::MemoryError),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
