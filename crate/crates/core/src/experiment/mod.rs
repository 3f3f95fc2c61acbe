//! Configuration, run orchestration, suites and metrics files.

mod config;
mod report;
mod run;
mod suite;

use std::path::PathBuf;

use thiserror::Error;

use crate::federated::FederatedError;
use crate::optimizer::PlanError;

pub use config::{ConfigError, ExperimentConfig, PopulationConfig, Scheme, TrainingConfig};
pub use report::{
    emit_report, metrics_rows, parse_metrics, parse_summary, summary_to_toml, write_metrics, MetricsRow, ReportError,
    METRICS_FILE, METRICS_HEADER, SUMMARY_FILE,
};
pub use run::{run_experiment, Experiment, RunResult, RunSummary};
pub use suite::{format_table, median, run_suite, run_suite_with, summarize, RunFailure, SchemeStats, SuiteReport, SuiteRun};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("setup failed: {0}")]
    Setup(FederatedError),
    #[error("round {round}: planning failed: {source}")]
    Plan { round: u64, source: PlanError },
    #[error("round {round}: {source}")]
    Infeasible { round: u64, source: FederatedError },
    #[error("round {round}: {source}")]
    Federated { round: u64, source: FederatedError },
    #[error("round {round}: non-finite value ({detail})")]
    Numeric { round: u64, detail: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl ExperimentError {
    /// Process exit code for this failure category.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) | ExperimentError::Setup(_) => 2,
            ExperimentError::Plan { .. } | ExperimentError::Infeasible { .. } => 3,
            ExperimentError::Federated { .. } | ExperimentError::Numeric { .. } => 4,
            ExperimentError::Io { .. } => 5,
        }
    }
}
