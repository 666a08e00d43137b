//! End-to-end experiment runners and their CSV artifacts.

mod analysis;
mod e3;
mod evaluate;
pub mod mini;
mod report;
mod slices;

pub use analysis::{
    confidence_correlations, correlation_matrix, group_analysis, ConfidenceCell, CorrelationMatrix, GroupStats,
    MetricGroups, PairwiseT, MATRIX_LABELS,
};
pub use e3::{
    read_e3_csv, scenario_correlations, table_e3_experiment, write_e3_csv, DetectionColumns, E3Report, E3Row,
    ScenarioCorrelation,
};
pub use evaluate::{evaluate_testset, BoxObservation, EvalConfig, EvalReport, ReconMetrics, RowKind};
pub use report::{comment_line, read_table2_csv, sha256_hex, write_table2_csv, Table2Row};
pub use slices::{
    read_box_observations_csv, read_partition_csv, read_slice_metrics_csv, write_box_observations_csv,
    write_partition_csv, write_slice_metrics_csv,
};

use std::path::PathBuf;

use thiserror::Error;

use crate::boxes::BoxError;
use crate::detection::DetectionError;
use crate::kspace::KspaceError;
use crate::manifest::ManifestError;
use crate::metrics::MetricError;
use crate::perturb::PerturbError;
use crate::stats::StatsError;
use crate::volume::VolumeError;

/// Significance level for every flag the harness raises.
pub const ALPHA: f64 = 0.05;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error(transparent)]
    Boxes(#[from] BoxError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Detection(#[from] DetectionError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Kspace(#[from] KspaceError),
    #[error(transparent)]
    Perturb(#[from] PerturbError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(String),
    #[error("need at least {needed} complete reconstruction rows, got {got}")]
    InsufficientRows { needed: usize, got: usize },
    #[error("no detection columns for variant {0:?}")]
    MissingVariant(String),
    #[error("{0}")]
    Invalid(String),
}

impl From<csv::Error> for HarnessError {
    fn from(e: csv::Error) -> Self {
        HarnessError::Csv(e.to_string())
    }
}

impl HarnessError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }
}
