//! On-disk layout of a data root and the overlay logs that annotate frames
//! after ingestion.
//!
//! ```text
//! <root>/cameras.jsonl          camera registry
//! <root>/raw/frames/            frame repository
//! <root>/raw/weather/           weather repository
//! <root>/raw/images/            captured images, by camera
//! <root>/raw/vision.jsonl       external classifier probabilities
//! <root>/qc/qc_log.jsonl        QC reports, latest per frame wins
//! <root>/labels/history.jsonl   label submissions, append-only
//! <root>/fused/<kind>/          encoded datasets
//! <root>/models/                trained models
//! <root>/reports/               evaluation reports
//! <root>/logs/                  run and uptime logs
//! ```

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::SnapshotKind;
use crate::ingest::{IngestError, Repository};
use crate::model::{
    ts_format, CameraRegistry, FrameKey, FrameRecord, ModelError, QcStatus, Timestamp, VisibilityClass, VisionProbs,
    WeatherRecord,
};
use crate::quality::QcReport;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
}

fn io_err(path: &Path, source: std::io::Error) -> StoreError {
    StoreError::Io { path: path.display().to_string(), source }
}

pub fn append_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), StoreError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    let mut body = String::new();
    for r in records {
        body.push_str(&serde_json::to_string(r).expect("record serializes"));
        body.push('\n');
    }
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path).map_err(|e| io_err(path, e))?;
    f.write_all(body.as_bytes()).map_err(|e| io_err(path, e))
}

/// Reads a record-per-line file; a missing file reads as empty.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path, e)),
    };
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| StoreError::Format {
                path: path.display().to_string(),
                message: format!("line {}: {e}", i + 1),
            })
        })
        .collect()
}

/// Vision classifier output for one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisionEntry {
    pub camera_id: String,
    #[serde(with = "ts_format")]
    pub captured_at: Timestamp,
    pub p_perfect: f64,
    pub p_clear: f64,
    pub p_cloudy: f64,
    pub p_obscured: f64,
}

impl VisionEntry {
    pub fn new(key: &FrameKey, probs: VisionProbs) -> Self {
        let [p_perfect, p_clear, p_cloudy, p_obscured] = probs.as_array();
        Self {
            camera_id: key.camera_id.clone(),
            captured_at: key.captured_at,
            p_perfect,
            p_clear,
            p_cloudy,
            p_obscured,
        }
    }

    pub fn probs(&self) -> Result<VisionProbs, ModelError> {
        VisionProbs::new(self.p_perfect, self.p_clear, self.p_cloudy, self.p_obscured)
    }
}

/// One entry of the label history. `label == None` retracts the annotator's
/// most recent standing submission for the frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelEvent {
    pub camera_id: String,
    #[serde(with = "ts_format")]
    pub captured_at: Timestamp,
    pub label: Option<VisibilityClass>,
    pub annotator: String,
    #[serde(with = "ts_format")]
    pub submitted_at: Timestamp,
}

impl LabelEvent {
    pub fn frame_key(&self) -> FrameKey {
        FrameKey::new(self.camera_id.clone(), self.captured_at)
    }
}

/// Replays the history: the active label of a frame is its latest
/// submission that has not been retracted.
pub fn active_labels(events: &[LabelEvent]) -> BTreeMap<FrameKey, VisibilityClass> {
    let mut stacks: BTreeMap<FrameKey, Vec<(&str, VisibilityClass)>> = BTreeMap::new();
    for e in events {
        let stack = stacks.entry(e.frame_key()).or_default();
        match e.label {
            Some(label) => stack.push((e.annotator.as_str(), label)),
            None => {
                if let Some(pos) = stack.iter().rposition(|(a, _)| *a == e.annotator) {
                    stack.remove(pos);
                }
            }
        }
    }
    stacks.into_iter().filter_map(|(k, s)| s.last().map(|(_, l)| (k, *l))).collect()
}

/// Machine-readable record of one CLI invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLogEntry {
    pub command: String,
    pub config_digest: String,
    pub seed: Option<u64>,
    #[serde(with = "ts_format")]
    pub started_at: Timestamp,
    pub duration_ms: u64,
    pub exit_code: i32,
}

#[derive(Debug, Clone)]
pub struct DataRoot {
    root: PathBuf,
}

impl DataRoot {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn ensure_layout(&self) -> Result<(), StoreError> {
        for dir in ["raw/frames", "raw/weather", "raw/images", "qc", "labels", "fused", "models", "reports", "logs"] {
            let p = self.root.join(dir);
            std::fs::create_dir_all(&p).map_err(|e| io_err(&p, e))?;
        }
        Ok(())
    }

    pub fn cameras_path(&self) -> PathBuf {
        self.root.join("cameras.jsonl")
    }

    pub fn images_dir(&self) -> PathBuf {
        self.root.join("raw/images")
    }

    pub fn vision_path(&self) -> PathBuf {
        self.root.join("raw/vision.jsonl")
    }

    pub fn qc_log_path(&self) -> PathBuf {
        self.root.join("qc/qc_log.jsonl")
    }

    pub fn label_history_path(&self) -> PathBuf {
        self.root.join("labels/history.jsonl")
    }

    pub fn fused_dir(&self, kind: SnapshotKind) -> PathBuf {
        self.root.join("fused").join(kind.slug())
    }

    pub fn models_dir(&self) -> PathBuf {
        self.root.join("models")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn run_log_path(&self) -> PathBuf {
        self.root.join("logs/runs.jsonl")
    }

    pub fn uptime_log_path(&self) -> PathBuf {
        self.root.join("logs/uptime.jsonl")
    }

    pub fn registry(&self) -> Result<CameraRegistry, StoreError> {
        Ok(CameraRegistry::load(&self.cameras_path())?)
    }

    pub fn frames(&self) -> Result<Repository<FrameRecord>, StoreError> {
        Ok(Repository::open(self.root.join("raw/frames"))?)
    }

    pub fn weather(&self) -> Result<Repository<WeatherRecord>, StoreError> {
        Ok(Repository::open(self.root.join("raw/weather"))?)
    }

    pub fn append_qc(&self, reports: &[QcReport]) -> Result<(), StoreError> {
        append_jsonl(&self.qc_log_path(), reports)
    }

    /// Latest QC report per frame.
    pub fn qc_reports(&self) -> Result<HashMap<FrameKey, QcReport>, StoreError> {
        let all: Vec<QcReport> = read_jsonl(&self.qc_log_path())?;
        Ok(all.into_iter().map(|r| (r.frame_key.clone(), r)).collect())
    }

    pub fn append_vision(&self, entries: &[VisionEntry]) -> Result<(), StoreError> {
        append_jsonl(&self.vision_path(), entries)
    }

    pub fn vision(&self) -> Result<HashMap<FrameKey, VisionProbs>, StoreError> {
        let entries: Vec<VisionEntry> = read_jsonl(&self.vision_path())?;
        entries.into_iter().map(|e| Ok((FrameKey::new(e.camera_id.clone(), e.captured_at), e.probs()?))).collect()
    }

    pub fn append_label(&self, event: &LabelEvent) -> Result<(), StoreError> {
        append_jsonl(&self.label_history_path(), std::slice::from_ref(event))
    }

    pub fn label_history(&self) -> Result<Vec<LabelEvent>, StoreError> {
        read_jsonl(&self.label_history_path())
    }

    pub fn append_run(&self, entry: &RunLogEntry) -> Result<(), StoreError> {
        append_jsonl(&self.run_log_path(), std::slice::from_ref(entry))
    }

    /// Frame records with QC verdicts, vision probabilities and active human
    /// labels merged in, in key order.
    ///
    /// A BAD_GRAY frame that a reviewer labelled with a non-BAD class counts
    /// as OK: the review overrides the automatic flag.
    pub fn assembled_frames(&self) -> Result<Vec<FrameRecord>, StoreError> {
        let mut frames = self.frames()?.read_all()?;
        let qc = self.qc_reports()?;
        let vision = self.vision()?;
        let labels = active_labels(&self.label_history()?);
        for f in &mut frames {
            let key = f.key();
            if f.qc_status != Some(QcStatus::Corrupt) {
                if let Some(r) = qc.get(&key) {
                    f.qc_status = Some(r.verdict);
                    f.grayness = r.grayness.or(f.grayness);
                }
            }
            if let Some(p) = vision.get(&key) {
                f.vision_probs = Some(*p);
            }
            if let Some(l) = labels.get(&key) {
                f.human_label = Some(*l);
            }
            if f.qc_status == Some(QcStatus::BadGray) && f.human_label.is_some_and(|l| l != VisibilityClass::Bad) {
                f.qc_status = Some(QcStatus::Ok);
            }
        }
        Ok(frames)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_ts;

    fn event(label: Option<VisibilityClass>, who: &str, minute: u32) -> LabelEvent {
        LabelEvent {
            camera_id: "a".into(),
            captured_at: parse_ts("2025-06-01T04:00:00Z").unwrap(),
            label,
            annotator: who.into(),
            submitted_at: parse_ts(&format!("2025-06-02T00:{minute:02}:00Z")).unwrap(),
        }
    }

    #[test]
    fn latest_wins_and_retraction_restores() {
        use VisibilityClass::*;
        let key = event(None, "x", 0).frame_key();
        let h = vec![event(Some(Clear), "ann", 1), event(Some(Cloudy), "ann", 2)];
        assert_eq!(active_labels(&h)[&key], Cloudy);
        let mut h2 = h.clone();
        h2.push(event(Some(Bad), "other", 3));
        h2.push(event(None, "ann", 4));
        assert_eq!(active_labels(&h2)[&key], Bad);
        h2.push(event(None, "other", 5));
        assert_eq!(active_labels(&h2)[&key], Clear);
        h2.push(event(None, "ann", 6));
        assert!(active_labels(&h2).is_empty());
    }

    #[test]
    fn overlays_merge_into_frames() {
        let dir = tempfile::tempdir().unwrap();
        let root = DataRoot::new(dir.path());
        root.ensure_layout().unwrap();
        let t = parse_ts("2025-06-01T04:00:00Z").unwrap();
        let frame = |cam: &str| FrameRecord {
            camera_id: cam.into(),
            captured_at: t,
            image_path: String::new(),
            qc_status: None,
            human_label: None,
            vision_probs: None,
            grayness: None,
            content_digest: Some(cam.into()),
        };
        root.frames().unwrap().append(&[frame("a"), frame("b")]).unwrap();
        let report = |cam: &str, verdict| QcReport {
            frame_key: FrameKey::new(cam, t),
            grayness: Some(0.5),
            duplicate_of: None,
            verdict,
            needs_review: verdict == QcStatus::BadGray,
            message: None,
        };
        root.append_qc(&[report("a", QcStatus::BadGray), report("b", QcStatus::BadGray)]).unwrap();
        let probs = VisionProbs::new(0.1, 0.2, 0.3, 0.4).unwrap();
        root.append_vision(&[VisionEntry::new(&FrameKey::new("a", t), probs)]).unwrap();
        let mut ev = event(Some(VisibilityClass::Clear), "ann", 1);
        root.append_label(&ev).unwrap();
        ev.camera_id = "b".into();
        ev.label = Some(VisibilityClass::Bad);
        root.append_label(&ev).unwrap();

        let frames = root.assembled_frames().unwrap();
        assert_eq!(frames[0].qc_status, Some(QcStatus::Ok));
        assert_eq!(frames[0].vision_probs, Some(probs));
        assert_eq!(frames[0].grayness, Some(0.5));
        assert!(frames[0].is_usable());
        assert_eq!(frames[1].qc_status, Some(QcStatus::BadGray));
        assert!(!frames[1].is_usable());
    }
}
