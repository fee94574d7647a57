//! Acquisition of frames and weather into append-only repositories.

mod frames;
mod repository;
mod schedule;
mod weather;

pub use frames::{drop_file_name, ingest_frame, scan_drop_dir, DroppedFrame, EARLIEST_PLAUSIBLE};
pub use repository::{AppendSummary, Manifest, Partition, RecordKey, RepoRecord, Repository, SCHEMA_VERSION};
pub use schedule::{schedule_tick, FetchJob, JobKind, JobOutcome, JobStatus, UptimeLog};
pub use weather::{
    fetch_weather, fetch_weather_with_retry, fixture_file_name, parse_forecast, FetchAttempts, FixtureWeatherSource,
    HttpWeatherSource, RetryPolicy, TransportError, WeatherQuery, WeatherSource, DEFAULT_ENDPOINT,
    OPEN_METEO_VARIABLES,
};

use thiserror::Error;

use crate::model::{ModelError, Timestamp};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("weather transport failed: {source}")]
    Transport {
        #[source]
        source: TransportError,
        /// Suggested delay before the next attempt when the error is retryable.
        retry_after: Option<std::time::Duration>,
    },
    #[error("weather response does not match the expected schema: {0}")]
    Schema(String),
    #[error("invalid weather query: {0}")]
    InvalidQuery(String),
    #[error("timestamp {0} is implausible (before 2020 or in the future)")]
    ImplausibleTimestamp(Timestamp),
    #[error("repository schema version {found} does not match {expected}")]
    SchemaMismatch { expected: u32, found: u32 },
    #[error("repository I/O error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt repository record in {path}: {message}")]
    CorruptRecord { path: String, message: String },
}

impl IngestError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Self::Io { path: path.display().to_string(), source }
    }

    pub fn is_retryable(&self) -> bool {
        matches!(self, Self::Transport { source, .. } if source.is_retryable())
    }
}
