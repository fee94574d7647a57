//! Domain types shared by every stage of the pipeline.
//!
//! Timestamps are UTC throughout. "Day" always means the camera-local civil
//! date, using a fixed UTC+9 offset for every site.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Duration, FixedOffset, NaiveDate, NaiveTime, Timelike, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Timestamp = DateTime<Utc>;

/// Capture and fetch cadence.
pub const GRID_MINUTES: i64 = 30;
/// Offset of camera-local civil time from UTC, in seconds.
pub const LOCAL_OFFSET_SECS: i32 = 9 * 3600;
/// Tolerance when renormalising probability vectors that drifted in transit.
pub const PROB_RENORM_BAND: f64 = 1e-3;
pub const PROB_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("BAD frames are excluded and have no visibility value")]
    ExcludedClass,
    #[error("unknown visibility class `{0}`")]
    UnknownClass(String),
    #[error("invalid class code {0}")]
    InvalidCode(u8),
    #[error("invalid vision probabilities: {0}")]
    InvalidProbs(String),
    #[error("invalid camera site: {0}")]
    InvalidSite(String),
    #[error("invalid weather record: {0}")]
    InvalidWeather(String),
    #[error("horizon {0} outside the supported range 0..=3")]
    InvalidHorizon(i64),
    #[error("unknown QC status `{0}`")]
    UnknownStatus(String),
    #[error("{0}")]
    Io(String),
}

pub fn local_offset() -> FixedOffset {
    FixedOffset::east_opt(LOCAL_OFFSET_SECS).expect("valid fixed offset")
}

pub fn local_date(ts: Timestamp) -> NaiveDate {
    ts.with_timezone(&local_offset()).date_naive()
}

pub fn local_time(ts: Timestamp) -> NaiveTime {
    ts.with_timezone(&local_offset()).time()
}

/// UTC instant of a local wall-clock time on a local date.
pub fn local_instant(date: NaiveDate, time: NaiveTime) -> Timestamp {
    (date.and_time(time) - Duration::seconds(i64::from(LOCAL_OFFSET_SECS))).and_utc()
}

/// Rounds down to the 30-minute grid.
pub fn floor_to_grid(ts: Timestamp) -> Timestamp {
    let secs = ts.timestamp();
    let step = GRID_MINUTES * 60;
    DateTime::from_timestamp(secs - secs.rem_euclid(step), 0).expect("in-range timestamp")
}

pub fn is_on_grid(ts: Timestamp) -> bool {
    ts.nanosecond() == 0 && ts.second() == 0 && ts.minute().is_multiple_of(GRID_MINUTES as u32)
}

/// RFC 3339 with second precision and a `Z` suffix.
pub fn format_ts(ts: Timestamp) -> String {
    ts.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

pub fn parse_ts(s: &str) -> Result<Timestamp, chrono::ParseError> {
    DateTime::parse_from_rfc3339(s).map(|t| t.with_timezone(&Utc))
}

pub mod ts_format {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ts: &Timestamp, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_ts(*ts))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Timestamp, D::Error> {
        let s = String::deserialize(d)?;
        parse_ts(&s).map_err(serde::de::Error::custom)
    }

    pub mod option {
        use super::*;

        pub fn serialize<S: Serializer>(ts: &Option<Timestamp>, s: S) -> Result<S::Ok, S::Error> {
            match ts {
                Some(t) => s.serialize_some(&format_ts(*t)),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Timestamp>, D::Error> {
            Option::<String>::deserialize(d)?.map(|s| parse_ts(&s).map_err(serde::de::Error::custom)).transpose()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VisibilityClass {
    Perfect,
    Clear,
    Cloudy,
    Obscured,
    Bad,
}

impl VisibilityClass {
    pub const ALL: [VisibilityClass; 5] = [Self::Perfect, Self::Clear, Self::Cloudy, Self::Obscured, Self::Bad];
    /// The classes the external vision model predicts (BAD is never in its support).
    pub const VISION: [VisibilityClass; 4] = [Self::Perfect, Self::Clear, Self::Cloudy, Self::Obscured];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Result<Self, ModelError> {
        Self::ALL.get(code as usize).copied().ok_or(ModelError::InvalidCode(code))
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Perfect => "PERFECT",
            Self::Clear => "CLEAR",
            Self::Cloudy => "CLOUDY",
            Self::Obscured => "OBSCURED",
            Self::Bad => "BAD",
        }
    }
}

impl fmt::Display for VisibilityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for VisibilityClass {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| ModelError::UnknownClass(s.to_string()))
    }
}

/// Whether a class counts as "visible". BAD frames must be filtered out
/// before this question is asked.
pub fn is_visible(label: VisibilityClass) -> Result<bool, ModelError> {
    match label {
        VisibilityClass::Perfect | VisibilityClass::Clear => Ok(true),
        VisibilityClass::Cloudy | VisibilityClass::Obscured => Ok(false),
        VisibilityClass::Bad => Err(ModelError::ExcludedClass),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraSite {
    pub camera_id: String,
    pub latitude: f64,
    pub longitude: f64,
    pub display_name: String,
}

impl CameraSite {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.camera_id.trim().is_empty() {
            return Err(ModelError::InvalidSite("empty camera_id".into()));
        }
        if !(-90.0..=90.0).contains(&self.latitude) {
            return Err(ModelError::InvalidSite(format!(
                "{}: latitude {} out of range",
                self.camera_id, self.latitude
            )));
        }
        if !(-180.0..=180.0).contains(&self.longitude) {
            return Err(ModelError::InvalidSite(format!(
                "{}: longitude {} out of range",
                self.camera_id, self.longitude
            )));
        }
        Ok(())
    }
}

/// Flat list of camera sites with unique ids, stored one JSON object per line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CameraRegistry {
    sites: Vec<CameraSite>,
}

impl CameraRegistry {
    pub fn new(sites: Vec<CameraSite>) -> Result<Self, ModelError> {
        let mut seen = std::collections::BTreeSet::new();
        for site in &sites {
            site.validate()?;
            if !seen.insert(site.camera_id.as_str()) {
                return Err(ModelError::InvalidSite(format!("duplicate camera_id {}", site.camera_id)));
            }
        }
        Ok(Self { sites })
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))?;
        let sites = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| ModelError::InvalidSite(e.to_string())))
            .collect::<Result<Vec<CameraSite>, _>>()?;
        Self::new(sites)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let mut out = String::new();
        for site in &self.sites {
            out.push_str(&serde_json::to_string(site).expect("site serializes"));
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))
    }

    pub fn sites(&self) -> &[CameraSite] {
        &self.sites
    }

    pub fn get(&self, camera_id: &str) -> Option<&CameraSite> {
        self.sites.iter().find(|s| s.camera_id == camera_id)
    }
}

/// Softmax output of the external four-class vision model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawProbs", into = "RawProbs")]
pub struct VisionProbs([f64; 4]);

#[derive(Serialize, Deserialize)]
struct RawProbs {
    p_perfect: f64,
    p_clear: f64,
    p_cloudy: f64,
    p_obscured: f64,
}

impl TryFrom<RawProbs> for VisionProbs {
    type Error = ModelError;

    fn try_from(r: RawProbs) -> Result<Self, Self::Error> {
        VisionProbs::new(r.p_perfect, r.p_clear, r.p_cloudy, r.p_obscured)
    }
}

impl From<VisionProbs> for RawProbs {
    fn from(v: VisionProbs) -> Self {
        let [p_perfect, p_clear, p_cloudy, p_obscured] = v.0;
        RawProbs { p_perfect, p_clear, p_cloudy, p_obscured }
    }
}

impl VisionProbs {
    pub fn new(p_perfect: f64, p_clear: f64, p_cloudy: f64, p_obscured: f64) -> Result<Self, ModelError> {
        Self::from_array([p_perfect, p_clear, p_cloudy, p_obscured])
    }

    /// Accepts vectors whose sum is within 1e-3 of one, renormalising those
    /// off by more than 1e-6; rejects everything else.
    pub fn from_array(p: [f64; 4]) -> Result<Self, ModelError> {
        if p.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Err(ModelError::InvalidProbs(format!("component outside [0, 1]: {p:?}")));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > PROB_RENORM_BAND {
            return Err(ModelError::InvalidProbs(format!("sum {sum} too far from 1")));
        }
        if (sum - 1.0).abs() <= PROB_SUM_TOLERANCE {
            return Ok(Self(p));
        }
        Ok(Self(p.map(|v| v / sum)))
    }

    /// Normalises arbitrary non-negative weights (used for window averages).
    pub fn normalized(weights: [f64; 4]) -> Result<Self, ModelError> {
        let sum: f64 = weights.iter().sum();
        if sum.is_nan() || sum <= 0.0 || weights.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(ModelError::InvalidProbs(format!("cannot normalise {weights:?}")));
        }
        Ok(Self(weights.map(|v| v / sum)))
    }

    pub fn as_array(&self) -> [f64; 4] {
        self.0
    }

    pub fn get(&self, class: VisibilityClass) -> Option<f64> {
        Self::slot(class).map(|i| self.0[i])
    }

    fn slot(class: VisibilityClass) -> Option<usize> {
        VisibilityClass::VISION.iter().position(|c| *c == class)
    }

    /// Most probable class; ties resolve to the earlier class code.
    pub fn argmax(&self) -> VisibilityClass {
        let mut best = 0;
        for i in 1..4 {
            if self.0[i] > self.0[best] {
                best = i;
            }
        }
        VisibilityClass::VISION[best]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum QcStatus {
    Ok,
    BadGray,
    Duplicate,
    Corrupt,
}

impl QcStatus {
    pub fn name(self) -> &'static str {
        match self {
            Self::Ok => "OK",
            Self::BadGray => "BAD_GRAY",
            Self::Duplicate => "DUPLICATE",
            Self::Corrupt => "CORRUPT",
        }
    }
}

impl fmt::Display for QcStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for QcStatus {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Self::Ok, Self::BadGray, Self::Duplicate, Self::Corrupt]
            .into_iter()
            .find(|q| q.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| ModelError::UnknownStatus(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FrameKey {
    pub camera_id: String,
    #[serde(with = "ts_format")]
    pub captured_at: Timestamp,
}

impl FrameKey {
    pub fn new(camera_id: impl Into<String>, captured_at: Timestamp) -> Self {
        Self { camera_id: camera_id.into(), captured_at }
    }
}

impl fmt::Display for FrameKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.camera_id, format_ts(self.captured_at))
    }
}

/// One webcam capture. `qc_status == None` means QC has not run yet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FrameRow", into = "FrameRow")]
pub struct FrameRecord {
    pub camera_id: String,
    pub captured_at: Timestamp,
    pub image_path: String,
    pub qc_status: Option<QcStatus>,
    pub human_label: Option<VisibilityClass>,
    pub vision_probs: Option<VisionProbs>,
    pub grayness: Option<f64>,
    pub content_digest: Option<String>,
}

impl FrameRecord {
    pub fn key(&self) -> FrameKey {
        FrameKey::new(self.camera_id.clone(), self.captured_at)
    }

    /// Eligible for the fused dataset: QC passed and not labelled BAD.
    pub fn is_usable(&self) -> bool {
        self.qc_status == Some(QcStatus::Ok) && self.human_label != Some(VisibilityClass::Bad)
    }
}

/// Flat on-disk shape of [`FrameRecord`].
#[derive(Serialize, Deserialize)]
struct FrameRow {
    camera_id: String,
    #[serde(with = "ts_format")]
    captured_at: Timestamp,
    image_path: String,
    qc_status: Option<QcStatus>,
    human_label: Option<VisibilityClass>,
    p_perfect: Option<f64>,
    p_clear: Option<f64>,
    p_cloudy: Option<f64>,
    p_obscured: Option<f64>,
    grayness: Option<f64>,
    content_digest: Option<String>,
}

impl TryFrom<FrameRow> for FrameRecord {
    type Error = ModelError;

    fn try_from(r: FrameRow) -> Result<Self, Self::Error> {
        let vision_probs = match (r.p_perfect, r.p_clear, r.p_cloudy, r.p_obscured) {
            (Some(a), Some(b), Some(c), Some(d)) => Some(VisionProbs::new(a, b, c, d)?),
            (None, None, None, None) => None,
            _ => return Err(ModelError::InvalidProbs("partial probability vector".into())),
        };
        if let Some(g) = r.grayness {
            if !(0.0..=1.0).contains(&g) {
                return Err(ModelError::InvalidProbs(format!("grayness {g} outside [0, 1]")));
            }
        }
        Ok(Self {
            camera_id: r.camera_id,
            captured_at: r.captured_at,
            image_path: r.image_path,
            qc_status: r.qc_status,
            human_label: r.human_label,
            vision_probs,
            grayness: r.grayness,
            content_digest: r.content_digest,
        })
    }
}

impl From<FrameRecord> for FrameRow {
    fn from(f: FrameRecord) -> Self {
        let p = f.vision_probs.map(|v| v.as_array());
        FrameRow {
            camera_id: f.camera_id,
            captured_at: f.captured_at,
            image_path: f.image_path,
            qc_status: f.qc_status,
            human_label: f.human_label,
            p_perfect: p.map(|p| p[0]),
            p_clear: p.map(|p| p[1]),
            p_cloudy: p.map(|p| p[2]),
            p_obscured: p.map(|p| p[3]),
            grayness: f.grayness,
            content_digest: f.content_digest,
        }
    }
}

/// The weather variables carried by every [`WeatherRecord`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum WeatherVariable {
    Temperature,
    WeatherCode,
    Humidity,
    Precipitation,
    Snowfall,
    CloudCover,
    SurfacePressure,
    SealevelPressure,
    WindSpeed,
    WindDirection,
}

impl WeatherVariable {
    pub const ALL: [WeatherVariable; 10] = [
        Self::Temperature,
        Self::WeatherCode,
        Self::Humidity,
        Self::Precipitation,
        Self::Snowfall,
        Self::CloudCover,
        Self::SurfacePressure,
        Self::SealevelPressure,
        Self::WindSpeed,
        Self::WindDirection,
    ];

    /// Field name used in records and feature columns.
    pub fn field(self) -> &'static str {
        match self {
            Self::Temperature => "temperature_c",
            Self::WeatherCode => "weather_code",
            Self::Humidity => "humidity_pct",
            Self::Precipitation => "precipitation_mm",
            Self::Snowfall => "snowfall_mm",
            Self::CloudCover => "cloud_cover_pct",
            Self::SurfacePressure => "surface_pressure_hpa",
            Self::SealevelPressure => "sealevel_pressure_hpa",
            Self::WindSpeed => "wind_speed_ms",
            Self::WindDirection => "wind_dir_deg",
        }
    }
}

/// Weather for one site and valid time. `lead_days` is -1 for the previous
/// day's observation, 0 for current conditions and 1..=6 for a forecast
/// issued that many days before `valid_at`. Absent variables are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherRecord {
    pub camera_id: String,
    #[serde(with = "ts_format")]
    pub valid_at: Timestamp,
    pub lead_days: i8,
    pub temperature_c: Option<f64>,
    pub weather_code: Option<i32>,
    pub humidity_pct: Option<f64>,
    pub precipitation_mm: Option<f64>,
    pub snowfall_mm: Option<f64>,
    pub cloud_cover_pct: Option<f64>,
    pub surface_pressure_hpa: Option<f64>,
    pub sealevel_pressure_hpa: Option<f64>,
    pub wind_speed_ms: Option<f64>,
    pub wind_dir_deg: Option<f64>,
}

impl WeatherRecord {
    pub const MIN_LEAD: i8 = -1;
    pub const MAX_LEAD: i8 = 6;

    pub fn empty(camera_id: impl Into<String>, valid_at: Timestamp, lead_days: i8) -> Self {
        Self {
            camera_id: camera_id.into(),
            valid_at,
            lead_days,
            temperature_c: None,
            weather_code: None,
            humidity_pct: None,
            precipitation_mm: None,
            snowfall_mm: None,
            cloud_cover_pct: None,
            surface_pressure_hpa: None,
            sealevel_pressure_hpa: None,
            wind_speed_ms: None,
            wind_dir_deg: None,
        }
    }

    pub fn get(&self, var: WeatherVariable) -> Option<f64> {
        match var {
            WeatherVariable::Temperature => self.temperature_c,
            WeatherVariable::WeatherCode => self.weather_code.map(f64::from),
            WeatherVariable::Humidity => self.humidity_pct,
            WeatherVariable::Precipitation => self.precipitation_mm,
            WeatherVariable::Snowfall => self.snowfall_mm,
            WeatherVariable::CloudCover => self.cloud_cover_pct,
            WeatherVariable::SurfacePressure => self.surface_pressure_hpa,
            WeatherVariable::SealevelPressure => self.sealevel_pressure_hpa,
            WeatherVariable::WindSpeed => self.wind_speed_ms,
            WeatherVariable::WindDirection => self.wind_dir_deg,
        }
    }

    pub fn set(&mut self, var: WeatherVariable, value: Option<f64>) {
        match var {
            WeatherVariable::Temperature => self.temperature_c = value,
            WeatherVariable::WeatherCode => self.weather_code = value.map(|v| v.round() as i32),
            WeatherVariable::Humidity => self.humidity_pct = value,
            WeatherVariable::Precipitation => self.precipitation_mm = value,
            WeatherVariable::Snowfall => self.snowfall_mm = value,
            WeatherVariable::CloudCover => self.cloud_cover_pct = value,
            WeatherVariable::SurfacePressure => self.surface_pressure_hpa = value,
            WeatherVariable::SealevelPressure => self.sealevel_pressure_hpa = value,
            WeatherVariable::WindSpeed => self.wind_speed_ms = value,
            WeatherVariable::WindDirection => self.wind_dir_deg = value,
        }
    }

    pub fn missing_variables(&self) -> Vec<WeatherVariable> {
        WeatherVariable::ALL.into_iter().filter(|v| self.get(*v).is_none()).collect()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidWeather(format!("{}: {msg}", self.camera_id)));
        if !(Self::MIN_LEAD..=Self::MAX_LEAD).contains(&self.lead_days) {
            return bad(format!("lead_days {} outside [-1, 6]", self.lead_days));
        }
        for (name, v) in [("humidity_pct", self.humidity_pct), ("cloud_cover_pct", self.cloud_cover_pct)] {
            if let Some(v) = v {
                if !(0.0..=100.0).contains(&v) {
                    return bad(format!("{name} {v} outside [0, 100]"));
                }
            }
        }
        for (name, v) in [("precipitation_mm", self.precipitation_mm), ("snowfall_mm", self.snowfall_mm)] {
            if let Some(v) = v {
                if v.is_nan() || v < 0.0 {
                    return bad(format!("{name} {v} negative"));
                }
            }
        }
        if let Some(d) = self.wind_dir_deg {
            if !(0.0..360.0).contains(&d) {
                return bad(format!("wind_dir_deg {d} outside [0, 360)"));
            }
        }
        Ok(())
    }
}

/// Forecast horizon in days, limited to the experimental range 0..=3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub struct Horizon(u8);

impl Horizon {
    pub const MAX_DAYS: u8 = 3;
    pub const ALL: [Horizon; 4] = [Horizon(0), Horizon(1), Horizon(2), Horizon(3)];

    pub fn new(days_ahead: i64) -> Result<Self, ModelError> {
        if (0..=i64::from(Self::MAX_DAYS)).contains(&days_ahead) {
            Ok(Self(days_ahead as u8))
        } else {
            Err(ModelError::InvalidHorizon(days_ahead))
        }
    }

    pub fn days(self) -> u8 {
        self.0
    }
}

impl TryFrom<i64> for Horizon {
    type Error = ModelError;

    fn try_from(v: i64) -> Result<Self, Self::Error> {
        Horizon::new(v)
    }
}

impl From<Horizon> for i64 {
    fn from(h: Horizon) -> Self {
        i64::from(h.0)
    }
}

impl fmt::Display for Horizon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "+{}d", self.0)
    }
}

/// Counts per visibility class, in class-code order.
pub fn class_distribution<I: IntoIterator<Item = VisibilityClass>>(classes: I) -> BTreeMap<VisibilityClass, usize> {
    let mut counts: BTreeMap<VisibilityClass, usize> = VisibilityClass::ALL.iter().map(|c| (*c, 0)).collect();
    for c in classes {
        *counts.entry(c).or_default() += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn ts(s: &str) -> Timestamp {
        parse_ts(s).unwrap()
    }

    #[test]
    fn visibility_partition() {
        assert!(is_visible(VisibilityClass::Perfect).unwrap());
        assert!(is_visible(VisibilityClass::Clear).unwrap());
        assert!(!is_visible(VisibilityClass::Cloudy).unwrap());
        assert!(!is_visible(VisibilityClass::Obscured).unwrap());
        assert_eq!(is_visible(VisibilityClass::Bad), Err(ModelError::ExcludedClass));
    }

    #[test]
    fn class_codes_round_trip() {
        for (i, c) in VisibilityClass::ALL.into_iter().enumerate() {
            assert_eq!(c.code() as usize, i);
            assert_eq!(VisibilityClass::from_code(c.code()).unwrap(), c);
            assert_eq!(c.name().parse::<VisibilityClass>().unwrap(), c);
            assert_eq!(serde_json::to_string(&c).unwrap(), format!("\"{}\"", c.name()));
        }
        assert!(VisibilityClass::from_code(5).is_err());
        assert!("FOGGY".parse::<VisibilityClass>().is_err());
        assert!(!VisibilityClass::VISION.contains(&VisibilityClass::Bad));
    }

    #[test]
    fn probs_validation() {
        assert!(VisionProbs::new(0.25, 0.25, 0.25, 0.25).is_ok());
        assert!(VisionProbs::new(0.5, 0.5, 0.5, 0.0).is_err());
        assert!(VisionProbs::new(-0.1, 0.6, 0.3, 0.2).is_err());
        assert!(VisionProbs::new(f64::NAN, 0.5, 0.25, 0.25).is_err());
        // small drift gets renormalised
        let p = VisionProbs::new(0.2, 0.2, 0.2, 0.4005).unwrap();
        assert!((p.as_array().iter().sum::<f64>() - 1.0).abs() <= PROB_SUM_TOLERANCE);
        assert_eq!(p.get(VisibilityClass::Bad), None);
    }

    #[test]
    fn argmax_ties_prefer_lower_code() {
        let p = VisionProbs::new(0.4, 0.4, 0.1, 0.1).unwrap();
        assert_eq!(p.argmax(), VisibilityClass::Perfect);
        let p = VisionProbs::new(0.1, 0.1, 0.1, 0.7).unwrap();
        assert_eq!(p.argmax(), VisibilityClass::Obscured);
    }

    #[test]
    fn grid_and_local_time() {
        assert_eq!(floor_to_grid(ts("2025-06-01T04:17:45Z")), ts("2025-06-01T04:00:00Z"));
        assert_eq!(floor_to_grid(ts("2025-06-01T04:30:00Z")), ts("2025-06-01T04:30:00Z"));
        assert!(is_on_grid(ts("2025-06-01T04:30:00Z")));
        assert!(!is_on_grid(ts("2025-06-01T04:31:00Z")));
        // 16:00 UTC is 01:00 the next local day
        assert_eq!(local_date(ts("2025-06-01T16:00:00Z")), NaiveDate::from_ymd_opt(2025, 6, 2).unwrap());
        let back =
            local_instant(NaiveDate::from_ymd_opt(2025, 6, 2).unwrap(), NaiveTime::from_hms_opt(1, 0, 0).unwrap());
        assert_eq!(back, ts("2025-06-01T16:00:00Z"));
    }

    #[test]
    fn frame_record_serializes_flat() {
        let f = FrameRecord {
            camera_id: "cam-1".into(),
            captured_at: Utc.with_ymd_and_hms(2025, 6, 1, 4, 0, 0).unwrap(),
            image_path: "raw/images/cam-1/x.jpg".into(),
            qc_status: Some(QcStatus::BadGray),
            human_label: Some(VisibilityClass::Clear),
            vision_probs: Some(VisionProbs::new(0.1, 0.6, 0.2, 0.1).unwrap()),
            grayness: Some(0.47),
            content_digest: Some("ab".into()),
        };
        let json = serde_json::to_string(&f).unwrap();
        assert!(json.contains("\"captured_at\":\"2025-06-01T04:00:00Z\""));
        assert!(json.contains("\"qc_status\":\"BAD_GRAY\""));
        assert!(json.contains("\"p_clear\":0.6"));
        let back: FrameRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back, f);
        let partial = json.replace("\"p_clear\":0.6", "\"p_clear\":null");
        assert!(serde_json::from_str::<FrameRecord>(&partial).is_err());
    }

    #[test]
    fn weather_validation() {
        let t = ts("2025-06-01T04:00:00Z");
        let mut w = WeatherRecord::empty("c", t, 0);
        w.validate().unwrap();
        w.humidity_pct = Some(101.0);
        assert!(w.validate().is_err());
        let mut w = WeatherRecord::empty("c", t, 7);
        assert!(w.validate().is_err());
        w.lead_days = 2;
        w.wind_dir_deg = Some(360.0);
        assert!(w.validate().is_err());
        w.wind_dir_deg = Some(0.0);
        w.snowfall_mm = Some(-1.0);
        assert!(w.validate().is_err());
    }

    #[test]
    fn horizons() {
        assert_eq!(Horizon::new(3).unwrap().days(), 3);
        assert_eq!(Horizon::new(4), Err(ModelError::InvalidHorizon(4)));
        assert!(Horizon::new(-1).is_err());
        assert_eq!(Horizon::new(1).unwrap().to_string(), "+1d");
    }

    #[test]
    fn registry_rejects_duplicates_and_bad_coords() {
        let site = |id: &str, lat: f64| CameraSite {
            camera_id: id.into(),
            latitude: lat,
            longitude: 138.7,
            display_name: id.into(),
        };
        assert!(CameraRegistry::new(vec![site("a", 35.3), site("b", 35.4)]).is_ok());
        assert!(CameraRegistry::new(vec![site("a", 35.3), site("a", 35.4)]).is_err());
        assert!(CameraRegistry::new(vec![site("a", 95.0)]).is_err());
        assert!(CameraRegistry::new(vec![site(" ", 35.0)]).is_err());
    }

    proptest! {
        #[test]
        fn accepted_probs_are_normalised(raw in proptest::array::uniform4(0.0f64..1.0)) {
            let sum: f64 = raw.iter().sum();
            prop_assume!(sum > 0.0);
            let scaled = raw.map(|v| v / sum);
            let p = VisionProbs::from_array(scaled).unwrap();
            prop_assert!((p.as_array().iter().sum::<f64>() - 1.0).abs() <= PROB_SUM_TOLERANCE);
            prop_assert!(p.as_array().iter().all(|v| (0.0..=1.0).contains(v)));
            let drifted = scaled.map(|v| v * 1.01);
            prop_assert!(VisionProbs::from_array(drifted).is_err() || drifted.iter().sum::<f64>() <= 1.0 + PROB_RENORM_BAND);
        }
    }
}
