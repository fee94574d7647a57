//! Fused day-level dataset: frame/weather alignment, day labels, horizon
//! targets, snapshots and the numeric feature matrix.

mod align;
mod dataset;
mod encode;
mod label;
mod snapshot;

pub use align::{align_frame_weather, JoinedFrame, ALIGN_TOLERANCE, FEATURE_LEADS};
pub use dataset::{
    build_examples, BuildStats, DayExample, FusedDataset, FusionConfig, Provenance, DATASET_SCHEMA_VERSION,
};
pub use encode::{circular_encode, ColumnSpec, Encoding, FeatureEncoder, FeatureMatrix, Modality};
pub use label::{day_label, shift_targets, DayLabel, LabelSource, Targets};
pub use snapshot::{snapshot_first_frame, snapshot_morning_window, DayFeatures, WeatherSummary, WINDOW_END};

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("no usable frames")]
    NoUsableFrames,
    #[error("day {0} has no usable frames")]
    EmptyDay(DayKey),
    #[error("theta {0} outside (0, 1]")]
    InvalidTheta(f64),
    #[error("examples mix snapshot kinds")]
    MixedSnapshotKinds,
    #[error("unknown snapshot kind `{0}`")]
    UnknownSnapshotKind(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl FusionError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Self::Io { path: path.display().to_string(), source }
    }

    pub(crate) fn format(path: &std::path::Path, message: impl fmt::Display) -> Self {
        Self::Format { path: path.display().to_string(), message: message.to_string() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SnapshotKind {
    FirstFrame,
    MorningWindow,
}

impl SnapshotKind {
    pub const ALL: [SnapshotKind; 2] = [Self::FirstFrame, Self::MorningWindow];

    pub fn name(self) -> &'static str {
        match self {
            Self::FirstFrame => "FIRST_FRAME",
            Self::MorningWindow => "MORNING_WINDOW",
        }
    }

    /// Directory name under `fused/`.
    pub fn slug(self) -> &'static str {
        match self {
            Self::FirstFrame => "first_frame",
            Self::MorningWindow => "morning_window",
        }
    }
}

impl fmt::Display for SnapshotKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SnapshotKind {
    type Err = FusionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s) || k.slug().eq_ignore_ascii_case(s))
            .ok_or_else(|| FusionError::UnknownSnapshotKind(s.to_string()))
    }
}

/// One camera on one camera-local calendar date.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DayKey {
    pub camera_id: String,
    pub date: NaiveDate,
}

impl DayKey {
    pub fn new(camera_id: impl Into<String>, date: NaiveDate) -> Self {
        Self { camera_id: camera_id.into(), date }
    }
}

impl fmt::Display for DayKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.camera_id, self.date)
    }
}
