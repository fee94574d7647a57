//! Trained model bundles and live prediction from the latest data.
//!
//! A bundle is a directory holding the tree ensemble (`model.json`) and the
//! metadata needed to rebuild its input row (`bundle.json`): snapshot kind,
//! feature encoder and the encoder columns the variant selects.

use std::path::Path;

use chrono::{Duration, NaiveDate};
use log::info;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use vistacast_gbdt::{schema_fingerprint, train, GbdtError, GbdtModel, GbdtParams};

use crate::eval::Variant;
use crate::fusion::{
    align_frame_weather, snapshot_first_frame, snapshot_morning_window, DayFeatures, DayKey, FeatureEncoder,
    FusedDataset, SnapshotKind, ALIGN_TOLERANCE,
};
use crate::model::{format_ts, local_date, CameraSite, FrameRecord, Horizon, WeatherRecord};

pub const BUNDLE_SCHEMA_VERSION: u32 = 1;
pub const DECISION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum PredictError {
    #[error(transparent)]
    Gbdt(#[from] GbdtError),
    #[error("no rows with a {0} target")]
    NoTargets(Horizon),
    #[error("training labels for {0} are single-class")]
    SingleClass(Horizon),
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> PredictError {
    PredictError::Io { path: path.display().to_string(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BundleMeta {
    schema_version: u32,
    horizon: Horizon,
    variant: Variant,
    snapshot_kind: SnapshotKind,
    include_meta: bool,
    columns: Vec<usize>,
    n_train: usize,
    encoder: FeatureEncoder,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub horizon: Horizon,
    pub variant: Variant,
    pub snapshot_kind: SnapshotKind,
    pub include_meta: bool,
    /// Encoder columns fed to the model, in model feature order.
    pub columns: Vec<usize>,
    pub n_train: usize,
    pub encoder: FeatureEncoder,
    pub model: GbdtModel,
}

/// Where `train` puts the model for a horizon.
pub fn bundle_dir(models_dir: &Path, h: Horizon) -> std::path::PathBuf {
    models_dir.join(format!("h{}", h.days()))
}

/// Fits one model on every row of `dataset` that has a target at `h`.
pub fn train_bundle(
    dataset: &FusedDataset,
    h: Horizon,
    variant: Variant,
    include_meta: bool,
    params: &GbdtParams,
) -> Result<ModelBundle, PredictError> {
    let (rows, labels) = dataset.rows_with_target(h);
    if rows.is_empty() {
        return Err(PredictError::NoTargets(h));
    }
    if labels.iter().all(|&y| y) || labels.iter().all(|&y| !y) {
        return Err(PredictError::SingleClass(h));
    }
    let m = &dataset.matrix;
    let columns = m.columns_for(&variant.modalities(include_meta));
    let names: Vec<String> = columns.iter().map(|&c| m.schema[c].name.clone()).collect();
    let x = m.values.select_rows(&rows).select_cols(&columns);
    let model = train(&x, &names, &labels, params)?;
    info!("trained {variant} {h} on {} rows, fingerprint {}", rows.len(), model.fingerprint());
    Ok(ModelBundle {
        horizon: h,
        variant,
        snapshot_kind: dataset.snapshot_kind(),
        include_meta,
        columns,
        n_train: rows.len(),
        encoder: dataset.encoder.clone(),
        model,
    })
}

impl ModelBundle {
    pub fn save(&self, dir: &Path) -> Result<(), PredictError> {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let meta = BundleMeta {
            schema_version: BUNDLE_SCHEMA_VERSION,
            horizon: self.horizon,
            variant: self.variant,
            snapshot_kind: self.snapshot_kind,
            include_meta: self.include_meta,
            columns: self.columns.clone(),
            n_train: self.n_train,
            encoder: self.encoder.clone(),
        };
        let meta_path = dir.join("bundle.json");
        let body = serde_json::to_string_pretty(&meta).expect("bundle meta serializes");
        std::fs::write(&meta_path, body + "\n").map_err(|e| io_err(&meta_path, e))?;
        let model_path = dir.join("model.json");
        std::fs::write(&model_path, self.model.to_json()).map_err(|e| io_err(&model_path, e))
    }

    pub fn load(dir: &Path) -> Result<Self, PredictError> {
        let meta_path = dir.join("bundle.json");
        let text = std::fs::read_to_string(&meta_path).map_err(|e| io_err(&meta_path, e))?;
        let format = |message: String| PredictError::Format { path: meta_path.display().to_string(), message };
        let meta: BundleMeta = serde_json::from_str(&text).map_err(|e| format(e.to_string()))?;
        if meta.schema_version != BUNDLE_SCHEMA_VERSION {
            return Err(format(format!("bundle schema version {}", meta.schema_version)));
        }
        let model_path = dir.join("model.json");
        let model = GbdtModel::from_json(&std::fs::read_to_string(&model_path).map_err(|e| io_err(&model_path, e))?)?;
        let schema = meta.encoder.schema();
        let names: Option<Vec<String>> = meta.columns.iter().map(|&c| schema.get(c).map(|s| s.name.clone())).collect();
        if names.as_deref() != Some(model.feature_names()) {
            return Err(format("encoder columns do not match the model's features".into()));
        }
        Ok(Self {
            horizon: meta.horizon,
            variant: meta.variant,
            snapshot_kind: meta.snapshot_kind,
            include_meta: meta.include_meta,
            columns: meta.columns,
            n_train: meta.n_train,
            encoder: meta.encoder,
            model,
        })
    }

    /// Probability that the site is visible `horizon` days after `date`,
    /// from the snapshot of `date`. `None` when the camera has no usable
    /// frame that day.
    pub fn predict(
        &self,
        site: &CameraSite,
        frames: &[FrameRecord],
        weather: &[WeatherRecord],
        date: NaiveDate,
    ) -> Result<Option<Prediction>, PredictError> {
        let Some(features) = live_snapshot(site, frames, weather, date, self.snapshot_kind) else {
            return Ok(None);
        };
        let key = DayKey::new(site.camera_id.clone(), date);
        let full = self.encoder.encode_parts(&key, &features, Some(site.latitude), Some(site.longitude));
        let row: Vec<f64> = self.columns.iter().map(|&c| full[c]).collect();
        let schema = self.encoder.schema();
        let names: Vec<String> = self.columns.iter().map(|&c| schema[c].name.clone()).collect();
        let probability = self.model.predict_checked(&schema_fingerprint(&names), &row)?;
        Ok(Some(Prediction {
            camera_id: site.camera_id.clone(),
            date,
            target_date: date + Duration::days(i64::from(self.horizon.days())),
            horizon: self.horizon,
            probability,
            visible: probability >= DECISION_THRESHOLD,
            variant: self.variant,
            snapshot_kind: self.snapshot_kind,
            model_fingerprint: self.model.fingerprint().to_string(),
            availability: Availability {
                vision: features.vision.is_some(),
                weather_leads: features.weather.map(|w| w.0.iter().any(Option::is_some)),
                fallback: features.fallback,
                frames_used: features.frames_used.iter().map(|t| format_ts(*t)).collect(),
            },
        }))
    }
}

/// Which inputs the prediction actually had.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Availability {
    pub vision: bool,
    /// Per feature lead 0..=3: whether any weather value was matched.
    pub weather_leads: [bool; 4],
    /// Morning window was empty and the first frame stood in.
    pub fallback: bool,
    pub frames_used: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub camera_id: String,
    pub date: NaiveDate,
    pub target_date: NaiveDate,
    pub horizon: Horizon,
    pub probability: f64,
    pub visible: bool,
    pub variant: Variant,
    pub snapshot_kind: SnapshotKind,
    pub model_fingerprint: String,
    pub availability: Availability,
}

/// Snapshot of one camera-day from raw records, the same way the fused
/// dataset builds it.
pub fn live_snapshot(
    site: &CameraSite,
    frames: &[FrameRecord],
    weather: &[WeatherRecord],
    date: NaiveDate,
    kind: SnapshotKind,
) -> Option<DayFeatures> {
    let day: Vec<FrameRecord> =
        frames.iter().filter(|f| f.camera_id == site.camera_id && local_date(f.captured_at) == date).cloned().collect();
    let own: Vec<WeatherRecord> = weather.iter().filter(|w| w.camera_id == site.camera_id).cloned().collect();
    let joined = align_frame_weather(&day, &own, ALIGN_TOLERANCE);
    match kind {
        SnapshotKind::FirstFrame => snapshot_first_frame(&joined),
        SnapshotKind::MorningWindow => snapshot_morning_window(&joined),
    }
}

/// Most recent local date with a usable frame for the camera.
pub fn latest_usable_date(camera_id: &str, frames: &[FrameRecord]) -> Option<NaiveDate> {
    frames.iter().filter(|f| f.camera_id == camera_id && f.is_usable()).map(|f| local_date(f.captured_at)).max()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{synth_generate, SynthConfig};
    use crate::fusion::{build_examples, FusionConfig};
    use crate::model::QcStatus;

    fn fixture() -> (crate::eval::SynthData, FusedDataset) {
        let data =
            synth_generate(&SynthConfig { n_cameras: 3, n_days: 30, seed: 4, ..SynthConfig::default() }).unwrap();
        let (ex, prov, _) = build_examples(&data.frames, &data.weather, &data.sites, &FusionConfig::default()).unwrap();
        let ds = FusedDataset::from_examples(&ex, prov, None).unwrap();
        (data, ds)
    }

    fn params() -> GbdtParams {
        GbdtParams { num_trees: 15, max_leaves: 7, min_child_samples: 5, ..GbdtParams::default() }
    }

    #[test]
    fn live_prediction_matches_dataset_row() {
        let (data, ds) = fixture();
        let h = Horizon::new(1).unwrap();
        let bundle = train_bundle(&ds, h, Variant::Fusion, true, &params()).unwrap();
        let key = &ds.matrix.keys[5];
        let site = data.sites.iter().find(|s| s.camera_id == key.camera_id).unwrap();
        let p = bundle.predict(site, &data.frames, &data.weather, key.date).unwrap().unwrap();
        let row: Vec<f64> = bundle.columns.iter().map(|&c| ds.matrix.values.get(5, c)).collect();
        assert_eq!(p.probability, bundle.model.predict_proba(&row).unwrap());
        assert_eq!(p.visible, p.probability >= 0.5);
        assert_eq!(p.target_date, key.date + Duration::days(1));
    }

    #[test]
    fn bundle_round_trip_predicts_identically() {
        let (data, ds) = fixture();
        let bundle = train_bundle(&ds, Horizon::new(0).unwrap(), Variant::YoloOnly, true, &params()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        bundle.save(dir.path()).unwrap();
        let back = ModelBundle::load(dir.path()).unwrap();
        assert_eq!(back, bundle);
        let site = &data.sites[0];
        let date = latest_usable_date(&site.camera_id, &data.frames).unwrap();
        assert_eq!(
            back.predict(site, &data.frames, &data.weather, date).unwrap(),
            bundle.predict(site, &data.frames, &data.weather, date).unwrap()
        );
    }

    #[test]
    fn no_usable_frames_means_no_prediction() {
        let (mut data, ds) = fixture();
        let bundle = train_bundle(&ds, Horizon::new(0).unwrap(), Variant::Fusion, true, &params()).unwrap();
        let site = data.sites[0].clone();
        let date = latest_usable_date(&site.camera_id, &data.frames).unwrap();
        for f in data.frames.iter_mut().filter(|f| f.camera_id == site.camera_id) {
            f.qc_status = Some(QcStatus::BadGray);
        }
        assert!(bundle.predict(&site, &data.frames, &data.weather, date).unwrap().is_none());
    }
}
