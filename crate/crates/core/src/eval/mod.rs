//! Grouped cross-validation, metrics, the variant × horizon experiment grid,
//! report rendering and the synthetic oracle dataset.

mod experiment;
mod folds;
mod metrics;
pub mod report;
mod synth;

pub use experiment::{
    cell_seed, run_experiment, CellResult, ExperimentConfig, ExperimentResult, FoldReport, ImportanceRow, SkippedFold,
    Variant,
};
pub use folds::{complement, group_kfold};
pub use metrics::{accuracy, roc_auc, Auc};
pub use report::{write_reports, ReportFiles};
pub use synth::{synth_generate, write_synth_images, SynthConfig, SynthData};

use thiserror::Error;
use vistacast_gbdt::GbdtError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("{groups} distinct groups, need at least k = {k}")]
    TooFewGroups { groups: usize, k: usize },
    #[error(transparent)]
    Gbdt(#[from] GbdtError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl EvalError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Self::Io { path: path.display().to_string(), source }
    }
}
