use std::path::PathBuf;
use std::time::{Duration, Instant};

use chrono::{NaiveDate, NaiveDateTime};
use log::warn;
use serde_json::Value;
use thiserror::Error;

use super::IngestError;
use crate::model::{CameraSite, Timestamp, WeatherRecord, WeatherVariable};

pub const DEFAULT_ENDPOINT: &str = "https://api.open-meteo.com/v1/forecast";

/// Upstream hourly variable name for each record field.
pub const OPEN_METEO_VARIABLES: [(WeatherVariable, &str); 10] = [
    (WeatherVariable::Temperature, "temperature_2m"),
    (WeatherVariable::WeatherCode, "weather_code"),
    (WeatherVariable::Humidity, "relative_humidity_2m"),
    (WeatherVariable::Precipitation, "precipitation"),
    (WeatherVariable::Snowfall, "snowfall"),
    (WeatherVariable::CloudCover, "cloud_cover"),
    (WeatherVariable::SurfacePressure, "surface_pressure"),
    (WeatherVariable::SealevelPressure, "pressure_msl"),
    (WeatherVariable::WindSpeed, "wind_speed_10m"),
    (WeatherVariable::WindDirection, "wind_direction_10m"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct WeatherQuery {
    pub latitude: f64,
    pub longitude: f64,
    pub variables: Vec<String>,
    pub forecast_days: u8,
    pub past_days: u8,
}

impl WeatherQuery {
    /// Every known variable, one previous day and seven forecast days
    /// (current day plus leads 1..=6).
    pub fn for_site(site: &CameraSite) -> Self {
        Self {
            latitude: site.latitude,
            longitude: site.longitude,
            variables: OPEN_METEO_VARIABLES.iter().map(|(_, n)| n.to_string()).collect(),
            forecast_days: 7,
            past_days: 1,
        }
    }

    pub fn validate(&self, max_horizon: u8) -> Result<(), IngestError> {
        if self.variables.is_empty() {
            return Err(IngestError::InvalidQuery("no variables requested".into()));
        }
        if !(1..=7).contains(&self.forecast_days) {
            return Err(IngestError::InvalidQuery(format!("forecast_days {} not in 1..=7", self.forecast_days)));
        }
        if self.past_days > 2 {
            return Err(IngestError::InvalidQuery(format!("past_days {} not in 0..=2", self.past_days)));
        }
        if self.forecast_days < max_horizon + 1 {
            return Err(IngestError::InvalidQuery(format!(
                "forecast_days {} does not cover horizon +{max_horizon}d",
                self.forecast_days
            )));
        }
        Ok(())
    }

    pub fn url(&self, endpoint: &str) -> String {
        format!(
            "{endpoint}?latitude={}&longitude={}&hourly={}&forecast_days={}&past_days={}&timezone=UTC&wind_speed_unit=ms",
            self.latitude,
            self.longitude,
            self.variables.join(","),
            self.forecast_days,
            self.past_days
        )
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum TransportError {
    #[error("request timed out: {0}")]
    Timeout(String),
    #[error("HTTP status {0}")]
    Status(u16),
    #[error("endpoint unreachable: {0}")]
    Connection(String),
    #[error("no recorded response: {0}")]
    MissingFixture(String),
    #[error("{0}")]
    Io(String),
}

impl TransportError {
    pub fn is_retryable(&self) -> bool {
        match self {
            Self::Timeout(_) | Self::Connection(_) => true,
            Self::Status(s) => *s >= 500 || *s == 429 || *s == 408,
            Self::MissingFixture(_) | Self::Io(_) => false,
        }
    }
}

/// Port through which raw forecast response bodies are obtained.
pub trait WeatherSource: Send + Sync {
    fn fetch(&self, query: &WeatherQuery, request_date: NaiveDate) -> Result<String, TransportError>;
}

/// Live client for an Open-Meteo-compatible forecast endpoint.
pub struct HttpWeatherSource {
    endpoint: String,
    agent: ureq::Agent,
}

impl HttpWeatherSource {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        let agent =
            ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(true).build().into();
        Self { endpoint: endpoint.into(), agent }
    }
}

impl Default for HttpWeatherSource {
    fn default() -> Self {
        Self::new(DEFAULT_ENDPOINT, Duration::from_secs(20))
    }
}

impl WeatherSource for HttpWeatherSource {
    fn fetch(&self, query: &WeatherQuery, _request_date: NaiveDate) -> Result<String, TransportError> {
        let url = query.url(&self.endpoint);
        let mut response = self.agent.get(&url).call().map_err(|e| match e {
            ureq::Error::StatusCode(code) => TransportError::Status(code),
            ureq::Error::Timeout(t) => TransportError::Timeout(t.to_string()),
            ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => TransportError::Timeout(io.to_string()),
            other => TransportError::Connection(other.to_string()),
        })?;
        response.body_mut().read_to_string().map_err(|e| TransportError::Io(e.to_string()))
    }
}

/// `<lat>_<lon>_<YYYY-MM-DD>.json`, coordinates with four decimals.
pub fn fixture_file_name(latitude: f64, longitude: f64, request_date: NaiveDate) -> String {
    format!("{latitude:.4}_{longitude:.4}_{request_date}.json")
}

/// Deterministic replay of recorded response bodies.
pub struct FixtureWeatherSource {
    dir: PathBuf,
}

impl FixtureWeatherSource {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn store(&self, query: &WeatherQuery, request_date: NaiveDate, body: &str) -> std::io::Result<()> {
        std::fs::create_dir_all(&self.dir)?;
        let name = fixture_file_name(query.latitude, query.longitude, request_date);
        std::fs::write(self.dir.join(name), body)
    }
}

impl WeatherSource for FixtureWeatherSource {
    fn fetch(&self, query: &WeatherQuery, request_date: NaiveDate) -> Result<String, TransportError> {
        let path = self.dir.join(fixture_file_name(query.latitude, query.longitude, request_date));
        std::fs::read_to_string(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => TransportError::MissingFixture(path.display().to_string()),
            _ => TransportError::Io(format!("{}: {e}", path.display())),
        })
    }
}

/// Converts an hourly forecast body into one record per lead day.
///
/// The record for lead `d` is valid at `due_at + d days` and takes the hourly
/// values nearest to that instant (within 30 minutes, ties to the earlier
/// hour). Missing keys or `null` entries leave the variable unset.
pub fn parse_forecast(
    body: &str,
    camera_id: &str,
    due_at: Timestamp,
    query: &WeatherQuery,
) -> Result<Vec<WeatherRecord>, IngestError> {
    let doc: Value = serde_json::from_str(body).map_err(|e| IngestError::Schema(e.to_string()))?;
    let hourly = doc
        .get("hourly")
        .and_then(Value::as_object)
        .ok_or_else(|| IngestError::Schema("missing `hourly` object".into()))?;
    let offset = doc.get("utc_offset_seconds").and_then(Value::as_i64).unwrap_or(0);
    let times = hourly
        .get("time")
        .and_then(Value::as_array)
        .ok_or_else(|| IngestError::Schema("missing `hourly.time` array".into()))?
        .iter()
        .map(|t| {
            let s = t.as_str().ok_or_else(|| IngestError::Schema("non-string time".into()))?;
            let naive = NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M")
                .map_err(|e| IngestError::Schema(format!("bad time `{s}`: {e}")))?;
            Ok((naive - chrono::Duration::seconds(offset)).and_utc())
        })
        .collect::<Result<Vec<Timestamp>, IngestError>>()?;
    let units = doc.get("hourly_units").and_then(Value::as_object);
    let unit_of = |name: &str| units.and_then(|u| u.get(name)).and_then(Value::as_str);

    let mut records = Vec::new();
    for lead in -i64::from(query.past_days)..i64::from(query.forecast_days) {
        let target = due_at + chrono::Duration::days(lead);
        let mut record = WeatherRecord::empty(camera_id, target, lead as i8);
        let Some(idx) = nearest_index(&times, target) else {
            warn!("{camera_id}: no hourly sample near {target} (lead {lead}); all variables missing");
            records.push(record);
            continue;
        };
        for (var, name) in OPEN_METEO_VARIABLES {
            if !query.variables.iter().any(|v| v == name) {
                continue;
            }
            let raw = hourly.get(name).and_then(Value::as_array).and_then(|a| a.get(idx)).and_then(Value::as_f64);
            let value = raw.map(|v| convert_unit(var, v, unit_of(name)));
            record.set(var, value);
        }
        sanitize(&mut record);
        records.push(record);
    }
    Ok(records)
}

fn nearest_index(times: &[Timestamp], target: Timestamp) -> Option<usize> {
    let tolerance = chrono::Duration::minutes(30);
    let mut best: Option<(usize, chrono::Duration)> = None;
    for (i, &t) in times.iter().enumerate() {
        let d = (t - target).abs();
        if d <= tolerance && best.is_none_or(|(bi, bd)| d < bd || (d == bd && t < times[bi])) {
            best = Some((i, d));
        }
    }
    best.map(|(i, _)| i)
}

fn convert_unit(var: WeatherVariable, value: f64, unit: Option<&str>) -> f64 {
    match (var, unit) {
        // upstream reports snowfall in centimetres by default
        (WeatherVariable::Snowfall, Some("cm") | None) => value * 10.0,
        (WeatherVariable::WindSpeed, Some("km/h")) => value / 3.6,
        (WeatherVariable::WindDirection, _) => value.rem_euclid(360.0),
        _ => value,
    }
}

/// Out-of-range values become missing rather than rejecting the record.
fn sanitize(record: &mut WeatherRecord) {
    for var in WeatherVariable::ALL {
        let Some(v) = record.get(var) else { continue };
        let ok = match var {
            WeatherVariable::Humidity | WeatherVariable::CloudCover => (0.0..=100.0).contains(&v),
            WeatherVariable::Precipitation | WeatherVariable::Snowfall => v >= 0.0,
            WeatherVariable::WindDirection => (0.0..360.0).contains(&v),
            _ => v.is_finite(),
        };
        if !ok {
            warn!("{}: {} value {v} out of range, marked missing", record.camera_id, var.field());
            record.set(var, None);
        }
    }
}

/// Single attempt: fetch one response body and parse it into records.
pub fn fetch_weather(
    site: &CameraSite,
    query: &WeatherQuery,
    due_at: Timestamp,
    source: &dyn WeatherSource,
) -> Result<Vec<WeatherRecord>, IngestError> {
    let body = source
        .fetch(query, due_at.date_naive())
        .map_err(|source| IngestError::Transport { source, retry_after: None })?;
    parse_forecast(&body, &site.camera_id, due_at, query)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    pub multiplier: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 3, initial_backoff: Duration::from_secs(5), multiplier: 2.0 }
    }
}

impl RetryPolicy {
    /// Delay after the given (1-based) failed attempt.
    pub fn backoff(&self, attempt: u32) -> Duration {
        self.initial_backoff.mul_f64(self.multiplier.powi(attempt.saturating_sub(1) as i32))
    }
}

#[derive(Debug)]
pub struct FetchAttempts {
    pub result: Result<Vec<WeatherRecord>, IngestError>,
    pub attempts: u32,
    pub backoffs: Vec<Duration>,
    pub latency: Duration,
}

/// Retries retryable transport errors with exponential backoff. `sleep` is
/// injected so tests and replays don't wait.
pub fn fetch_weather_with_retry(
    site: &CameraSite,
    query: &WeatherQuery,
    due_at: Timestamp,
    source: &dyn WeatherSource,
    policy: &RetryPolicy,
    sleep: &mut dyn FnMut(Duration),
) -> FetchAttempts {
    let start = Instant::now();
    let mut backoffs = Vec::new();
    let mut attempt = 0;
    loop {
        attempt += 1;
        let result = fetch_weather(site, query, due_at, source);
        match result {
            Err(IngestError::Transport { source: err, .. }) if err.is_retryable() && attempt < policy.max_attempts => {
                let delay = policy.backoff(attempt);
                warn!("{}: attempt {attempt} failed ({err}); retrying in {delay:?}", site.camera_id);
                backoffs.push(delay);
                sleep(delay);
            }
            Err(IngestError::Transport { source: err, .. }) => {
                let retry_after = err.is_retryable().then(|| policy.backoff(attempt));
                return FetchAttempts {
                    result: Err(IngestError::Transport { source: err, retry_after }),
                    attempts: attempt,
                    backoffs,
                    latency: start.elapsed(),
                };
            }
            other => {
                return FetchAttempts { result: other, attempts: attempt, backoffs, latency: start.elapsed() };
            }
        }
    }
}
