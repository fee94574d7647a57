use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use chrono::{Duration, NaiveDate};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use vistacast_core::ingest::IngestError;
use vistacast_core::model::{
    class_distribution, local_date, ts_format, CameraSite, FrameKey, FrameRecord, Horizon, QcStatus, Timestamp,
    VisibilityClass, WeatherRecord,
};
use vistacast_core::predict::{bundle_dir, ModelBundle, Prediction};
use vistacast_core::store::{active_labels, DataRoot, LabelEvent, StoreError};

use crate::clock::Clock;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("{0}")]
    Model(String),
}

/// An error with HTTP semantics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: u16, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into() }
    }

    pub fn not_found(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(404, code, message)
    }

    pub fn invalid(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(422, code, message)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(500, "internal", message)
    }
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// How long a frame handed out by the queue stays reserved.
    pub lease: Duration,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self { lease: Duration::seconds(120) }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
pub struct QueueFilter {
    pub camera: Option<String>,
    pub date: Option<NaiveDate>,
    /// `Some(true)`: only auto-flagged frames; `Some(false)`: only unflagged.
    pub needs_review: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameDescriptor {
    pub camera_id: String,
    #[serde(with = "ts_format")]
    pub captured_at: Timestamp,
    pub local_date: NaiveDate,
    pub image_path: String,
    pub image_url: String,
    pub qc_status: Option<QcStatus>,
    pub grayness: Option<f64>,
    pub needs_review: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NextFrame {
    pub schema_version: u32,
    /// True when nothing matching the filter is waiting.
    pub empty: bool,
    pub frame: Option<FrameDescriptor>,
    #[serde(with = "ts_format::option")]
    pub lease_expires_at: Option<Timestamp>,
    pub queue_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelSubmission {
    pub key: FrameKey,
    pub label: VisibilityClass,
    pub annotator: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubmitAck {
    pub schema_version: u32,
    pub camera_id: String,
    #[serde(with = "ts_format")]
    pub captured_at: Timestamp,
    pub active_label: VisibilityClass,
    /// Submissions and retractions recorded for this frame.
    pub history_length: usize,
    pub queue_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UndoRequest {
    pub key: FrameKey,
    pub annotator: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UndoAck {
    pub schema_version: u32,
    pub camera_id: String,
    #[serde(with = "ts_format")]
    pub captured_at: Timestamp,
    pub retracted: VisibilityClass,
    pub active_label: Option<VisibilityClass>,
    pub queue_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassStats {
    pub schema_version: u32,
    pub total: usize,
    pub counts: BTreeMap<VisibilityClass, usize>,
    pub fractions: BTreeMap<VisibilityClass, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CameraSummary {
    #[serde(flatten)]
    pub site: CameraSite,
    pub frames: usize,
    pub unlabeled: usize,
    pub needs_review: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum PredictOutcome {
    Ok { schema_version: u32, prediction: Prediction },
    NoData { schema_version: u32, camera_id: String, date: NaiveDate, message: String },
}

struct Inner {
    /// Frames that can be shown to an annotator, oldest first.
    frames: Vec<FrameRecord>,
    index: HashMap<FrameKey, usize>,
    history: Vec<LabelEvent>,
    active: BTreeMap<FrameKey, VisibilityClass>,
    leases: HashMap<FrameKey, (String, Timestamp)>,
}

impl Inner {
    fn label_of(&self, i: usize) -> Option<VisibilityClass> {
        let f = &self.frames[i];
        self.active.get(&f.key()).copied().or(f.human_label)
    }

    fn queue_size(&self) -> usize {
        (0..self.frames.len()).filter(|&i| self.label_of(i).is_none()).count()
    }
}

pub struct LabelingService {
    root: DataRoot,
    clock: Arc<dyn Clock>,
    config: ServiceConfig,
    sites: Vec<CameraSite>,
    all_frames: Vec<FrameRecord>,
    weather: Vec<WeatherRecord>,
    models: BTreeMap<Horizon, ModelBundle>,
    inner: RwLock<Inner>,
}

fn needs_review(f: &FrameRecord) -> bool {
    f.qc_status == Some(QcStatus::BadGray)
}

impl LabelingService {
    /// Loads the registry, frames with their QC verdicts, weather, label
    /// history and whatever models exist under `models/h<h>/`.
    pub fn open(root: DataRoot, clock: Arc<dyn Clock>, config: ServiceConfig) -> Result<Self, ServiceError> {
        let sites = root.registry()?.sites().to_vec();
        let qc = root.qc_reports()?;
        let mut frames = root.frames()?.read_all()?;
        for f in &mut frames {
            if f.qc_status != Some(QcStatus::Corrupt) {
                if let Some(r) = qc.get(&f.key()) {
                    f.qc_status = Some(r.verdict);
                    f.grayness = r.grayness.or(f.grayness);
                }
            }
        }
        let mut queue: Vec<FrameRecord> = frames
            .iter()
            .filter(|f| !matches!(f.qc_status, Some(QcStatus::Corrupt | QcStatus::Duplicate)))
            .cloned()
            .collect();
        queue.sort_by(|a, b| (a.captured_at, &a.camera_id).cmp(&(b.captured_at, &b.camera_id)));
        let index = queue.iter().enumerate().map(|(i, f)| (f.key(), i)).collect();
        let history = root.label_history()?;
        let active = active_labels(&history);

        let mut models = BTreeMap::new();
        for h in Horizon::ALL {
            let dir = bundle_dir(&root.models_dir(), h);
            if dir.join("bundle.json").exists() {
                let bundle = ModelBundle::load(&dir).map_err(|e| ServiceError::Model(e.to_string()))?;
                models.insert(h, bundle);
            }
        }
        let weather = root.weather()?.read_all()?;
        info!(
            "service: {} cameras, {} frames, {} label events, models for {:?}",
            sites.len(),
            queue.len(),
            history.len(),
            models.keys().map(|h| h.days()).collect::<Vec<_>>()
        );
        let vision = root.vision()?;
        let all_frames = frames
            .into_iter()
            .map(|mut f| {
                if let Some(p) = vision.get(&f.key()) {
                    f.vision_probs = Some(*p);
                }
                f
            })
            .collect();
        Ok(Self {
            root,
            clock,
            config,
            sites,
            all_frames,
            weather,
            models,
            inner: RwLock::new(Inner { frames: queue, index, history, active, leases: HashMap::new() }),
        })
    }

    pub fn data_root(&self) -> &DataRoot {
        &self.root
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    fn check_camera(&self, camera: &str) -> Result<&CameraSite, ApiError> {
        self.sites
            .iter()
            .find(|s| s.camera_id == camera)
            .ok_or_else(|| ApiError::not_found("unknown_camera", format!("unknown camera `{camera}`")))
    }

    pub fn queue_size(&self) -> usize {
        self.inner.read().expect("state lock").queue_size()
    }

    /// Oldest unlabeled frame matching `filter` that nobody holds a live
    /// lease on. The frame is leased to `annotator` until the lease expires,
    /// so repeated calls walk forward through the queue.
    pub fn next_unlabeled(&self, annotator: &str, filter: &QueueFilter) -> Result<NextFrame, ApiError> {
        if annotator.trim().is_empty() {
            return Err(ApiError::invalid("missing_annotator", "annotator must be non-empty"));
        }
        if let Some(c) = &filter.camera {
            self.check_camera(c)?;
        }
        let now = self.clock.now();
        let mut inner = self.inner.write().expect("state lock");
        inner.leases.retain(|_, (_, until)| *until > now);
        let pick = (0..inner.frames.len()).find(|&i| {
            let f = &inner.frames[i];
            inner.label_of(i).is_none()
                && !inner.leases.contains_key(&f.key())
                && filter.camera.as_ref().is_none_or(|c| *c == f.camera_id)
                && filter.date.is_none_or(|d| d == local_date(f.captured_at))
                && filter.needs_review.is_none_or(|r| r == needs_review(f))
        });
        let queue_size = inner.queue_size();
        let Some(i) = pick else {
            return Ok(NextFrame {
                schema_version: SCHEMA_VERSION,
                empty: true,
                frame: None,
                lease_expires_at: None,
                queue_size,
            });
        };
        let until = now + self.config.lease;
        let f = inner.frames[i].clone();
        inner.leases.insert(f.key(), (annotator.to_string(), until));
        Ok(NextFrame {
            schema_version: SCHEMA_VERSION,
            empty: false,
            frame: Some(FrameDescriptor {
                camera_id: f.camera_id.clone(),
                captured_at: f.captured_at,
                local_date: local_date(f.captured_at),
                image_url: format!("/images/{}", f.image_path),
                image_path: f.image_path.clone(),
                qc_status: f.qc_status,
                grayness: f.grayness,
                needs_review: needs_review(&f),
            }),
            lease_expires_at: Some(until),
            queue_size,
        })
    }

    /// Appends a submission to the history; the latest submission is the
    /// active label.
    pub fn submit(&self, sub: LabelSubmission) -> Result<SubmitAck, ApiError> {
        if sub.annotator.trim().is_empty() {
            return Err(ApiError::invalid("missing_annotator", "annotator must be non-empty"));
        }
        let mut inner = self.inner.write().expect("state lock");
        if !inner.index.contains_key(&sub.key) {
            return Err(ApiError::not_found("unknown_frame", format!("no labelable frame {}", sub.key)));
        }
        let event = LabelEvent {
            camera_id: sub.key.camera_id.clone(),
            captured_at: sub.key.captured_at,
            label: Some(sub.label),
            annotator: sub.annotator,
            submitted_at: self.clock.now(),
        };
        self.root.append_label(&event).map_err(|e| ApiError::internal(e.to_string()))?;
        inner.history.push(event);
        inner.active.insert(sub.key.clone(), sub.label);
        inner.leases.remove(&sub.key);
        let history_length = inner.history.iter().filter(|e| e.frame_key() == sub.key).count();
        Ok(SubmitAck {
            schema_version: SCHEMA_VERSION,
            camera_id: sub.key.camera_id,
            captured_at: sub.key.captured_at,
            active_label: sub.label,
            history_length,
            queue_size: inner.queue_size(),
        })
    }

    /// Retracts the annotator's most recent standing submission for the
    /// frame. The frame returns to the queue when no other label remains.
    pub fn undo(&self, req: UndoRequest) -> Result<UndoAck, ApiError> {
        let mut inner = self.inner.write().expect("state lock");
        if !inner.index.contains_key(&req.key) {
            return Err(ApiError::not_found("unknown_frame", format!("no labelable frame {}", req.key)));
        }
        let standing = {
            let mine: Vec<LabelEvent> = inner
                .history
                .iter()
                .filter(|e| e.frame_key() == req.key && e.annotator == req.annotator)
                .cloned()
                .collect();
            let before = active_labels(&mine);
            before.get(&req.key).copied()
        };
        let Some(retracted) = standing else {
            return Err(ApiError::new(
                409,
                "nothing_to_undo",
                format!("{} has no standing label on {}", req.annotator, req.key),
            ));
        };
        let event = LabelEvent {
            camera_id: req.key.camera_id.clone(),
            captured_at: req.key.captured_at,
            label: None,
            annotator: req.annotator,
            submitted_at: self.clock.now(),
        };
        self.root.append_label(&event).map_err(|e| ApiError::internal(e.to_string()))?;
        inner.history.push(event);
        inner.active = active_labels(&inner.history);
        inner.leases.remove(&req.key);
        let i = inner.index[&req.key];
        Ok(UndoAck {
            schema_version: SCHEMA_VERSION,
            camera_id: req.key.camera_id,
            captured_at: req.key.captured_at,
            retracted,
            active_label: inner.label_of(i),
            queue_size: inner.queue_size(),
        })
    }

    pub fn history(&self, annotator: Option<&str>) -> Vec<LabelEvent> {
        let inner = self.inner.read().expect("state lock");
        inner.history.iter().filter(|e| annotator.is_none_or(|a| a == e.annotator)).cloned().collect()
    }

    /// Distribution of current human labels over all labelable frames.
    pub fn class_stats(&self) -> ClassStats {
        let inner = self.inner.read().expect("state lock");
        let counts = class_distribution((0..inner.frames.len()).filter_map(|i| inner.label_of(i)));
        let total: usize = counts.values().sum();
        let fractions =
            counts.iter().map(|(c, n)| (*c, if total == 0 { 0.0 } else { *n as f64 / total as f64 })).collect();
        ClassStats { schema_version: SCHEMA_VERSION, total, counts, fractions }
    }

    pub fn cameras(&self) -> Vec<CameraSummary> {
        let inner = self.inner.read().expect("state lock");
        self.sites
            .iter()
            .map(|site| {
                let mine: Vec<usize> =
                    (0..inner.frames.len()).filter(|&i| inner.frames[i].camera_id == site.camera_id).collect();
                CameraSummary {
                    site: site.clone(),
                    frames: mine.len(),
                    unlabeled: mine.iter().filter(|&&i| inner.label_of(i).is_none()).count(),
                    needs_review: mine.iter().filter(|&&i| needs_review(&inner.frames[i])).count(),
                }
            })
            .collect()
    }

    /// Prediction for `camera` from its snapshot on `date` (default: the
    /// camera-local date of now).
    pub fn predict(&self, camera: &str, horizon: i64, date: Option<NaiveDate>) -> Result<PredictOutcome, ApiError> {
        let h = Horizon::new(horizon).map_err(|e| ApiError::invalid("invalid_horizon", e.to_string()))?;
        let site = self.check_camera(camera)?;
        let bundle = self
            .models
            .get(&h)
            .ok_or_else(|| ApiError::new(503, "no_model", format!("no trained model for horizon {h}")))?;
        let date = date.unwrap_or_else(|| local_date(self.clock.now()));
        // current labels decide usability the same way fusion does: BAD
        // excludes, a reviewed BAD_GRAY frame counts as OK
        let frames: Vec<FrameRecord> = {
            let inner = self.inner.read().expect("state lock");
            self.all_frames
                .iter()
                .filter(|f| f.camera_id == camera && local_date(f.captured_at) == date)
                .map(|f| {
                    let mut f = f.clone();
                    if let Some(l) = inner.active.get(&f.key()) {
                        f.human_label = Some(*l);
                    }
                    if needs_review(&f) && f.human_label.is_some_and(|l| l != VisibilityClass::Bad) {
                        f.qc_status = Some(QcStatus::Ok);
                    }
                    f
                })
                .collect()
        };
        match bundle.predict(site, &frames, &self.weather, date) {
            Ok(Some(prediction)) => Ok(PredictOutcome::Ok { schema_version: SCHEMA_VERSION, prediction }),
            Ok(None) => Ok(PredictOutcome::NoData {
                schema_version: SCHEMA_VERSION,
                camera_id: camera.to_string(),
                date,
                message: format!("no usable frames for {camera} on {date}"),
            }),
            Err(e) => {
                warn!("predict {camera} {h}: {e}");
                Err(ApiError::internal(e.to_string()))
            }
        }
    }

    /// Resolves an image reference to a file under `raw/images/`.
    pub fn image_path(&self, rel: &str) -> Result<PathBuf, ApiError> {
        let p = std::path::Path::new(rel);
        let safe = p.starts_with("raw/images") && p.components().all(|c| matches!(c, std::path::Component::Normal(_)));
        if !safe {
            return Err(ApiError::not_found("unknown_image", format!("no image `{rel}`")));
        }
        Ok(self.root.path().join(p))
    }

    /// Resolves a report file name to a file directly under `reports/` or
    /// one of its subdirectories.
    pub fn report_path(&self, rel: &str) -> Result<PathBuf, ApiError> {
        let p = std::path::Path::new(rel);
        if rel.is_empty() || !p.components().all(|c| matches!(c, std::path::Component::Normal(_))) {
            return Err(ApiError::not_found("unknown_report", format!("no report `{rel}`")));
        }
        Ok(self.root.reports_dir().join(p))
    }
}
