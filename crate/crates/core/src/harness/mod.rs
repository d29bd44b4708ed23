//! Run configuration, training and evaluation entry points, and reports.

mod config;
mod data;
mod eval;
mod table;
mod train;

use thiserror::Error;

use crate::datasets::DatasetError;
use crate::env::EnvError;
use crate::learn::LearnError;
use crate::nn::NnError;

pub use config::{Algorithm, BcConfig, RunConfig};
pub use data::{collect_expert, relabel_dataset, CollectSummary};
pub use eval::{evaluate, evaluate_policy, EvalReport, SeedResult};
pub use table::{collect_reports, emit_results_table, normalize_curve, ResultsTable, TableCell};
pub use train::{train, MetricsRow, SeedOutcome, TrainArtifacts};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
    #[error("missing dataset: {0} needs dataset_dir")]
    MissingDataset(&'static str),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("observation layout mismatch: policy has {policy} inputs, task {task} has {task_dims}")]
    LayoutMismatch {
        task: String,
        policy: usize,
        task_dims: usize,
    },
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

impl HarnessError {
    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            HarnessError::Config(_) => "config",
            HarnessError::Io(_) => "io",
            HarnessError::MissingDataset(_) => "missing_dataset",
            HarnessError::EmptyDataset => "empty_dataset",
            HarnessError::LayoutMismatch { .. } => "layout_mismatch",
            HarnessError::Learn(_) => "learn",
            HarnessError::Nn(_) => "policy",
            HarnessError::Dataset(_) => "dataset",
            HarnessError::Env(_) => "env",
        }
    }
}

pub(crate) fn io_err(path: &std::path::Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Io(format!("{}: {e}", path.display()))
}
