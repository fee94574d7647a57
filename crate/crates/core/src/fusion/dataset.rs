use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDate;
use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use vistacast_gbdt::Matrix;

use super::{
    align_frame_weather, day_label, shift_targets, snapshot_first_frame, snapshot_morning_window, ColumnSpec,
    DayFeatures, DayKey, FeatureEncoder, FeatureMatrix, FusionError, JoinedFrame, LabelSource, SnapshotKind, Targets,
    ALIGN_TOLERANCE,
};
use crate::model::{format_ts, local_date, CameraSite, FrameRecord, Horizon, WeatherRecord};

pub const DATASET_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    pub theta: f64,
    pub snapshot_kind: SnapshotKind,
    pub label_source: LabelSource,
    pub tolerance_minutes: i64,
    pub horizons: Vec<Horizon>,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            theta: 0.5,
            snapshot_kind: SnapshotKind::FirstFrame,
            label_source: LabelSource::Vision,
            tolerance_minutes: ALIGN_TOLERANCE.num_minutes(),
            horizons: Horizon::ALL.to_vec(),
        }
    }
}

/// One (camera, date) training row before encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayExample {
    pub key: DayKey,
    pub snapshot_kind: SnapshotKind,
    pub features: DayFeatures,
    pub latitude: Option<f64>,
    pub longitude: Option<f64>,
    pub visible_fraction: f64,
    pub label_today: bool,
    pub targets: Targets,
}

/// Which frames fed a row, for leakage audits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub camera_id: String,
    pub date: NaiveDate,
    pub snapshot_kind: SnapshotKind,
    pub feature_frames: Vec<String>,
    pub fallback: bool,
    pub label_frames: usize,
    pub visible_fraction: f64,
}

impl Provenance {
    pub fn of(e: &DayExample, label_frames: usize) -> Self {
        Self {
            camera_id: e.key.camera_id.clone(),
            date: e.key.date,
            snapshot_kind: e.snapshot_kind,
            feature_frames: e.features.frames_used.iter().map(|t| format_ts(*t)).collect(),
            fallback: e.features.fallback,
            label_frames,
            visible_fraction: e.visible_fraction,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildStats {
    pub usable_frames: usize,
    pub days_seen: usize,
    pub days_labeled: usize,
    pub days_without_label: usize,
    pub fallbacks: usize,
}

/// Aligns, labels, shifts and snapshots every (camera, date) with usable
/// frames. Days whose frames carry no class are dropped. Output is ordered
/// by camera then date.
pub fn build_examples(
    frames: &[FrameRecord],
    weather: &[WeatherRecord],
    sites: &[CameraSite],
    config: &FusionConfig,
) -> Result<(Vec<DayExample>, Vec<Provenance>, BuildStats), FusionError> {
    if !(config.theta > 0.0 && config.theta <= 1.0) {
        return Err(FusionError::InvalidTheta(config.theta));
    }
    let usable = frames.iter().filter(|f| f.is_usable()).count();
    if usable == 0 {
        return Err(FusionError::NoUsableFrames);
    }
    let joined = align_frame_weather(frames, weather, chrono::Duration::minutes(config.tolerance_minutes));

    let mut days: BTreeMap<DayKey, Vec<JoinedFrame>> = BTreeMap::new();
    for row in joined {
        let key = DayKey::new(row.frame.camera_id.clone(), local_date(row.frame.captured_at));
        days.entry(key).or_default().push(row);
    }

    let mut stats = BuildStats { usable_frames: usable, days_seen: days.len(), ..Default::default() };
    let mut labels: BTreeMap<DayKey, (f64, bool, usize)> = BTreeMap::new();
    for (key, rows) in &days {
        let classes: Vec<_> = rows.iter().filter_map(|r| config.label_source.class_of(&r.frame)).collect();
        match day_label(&classes, config.theta) {
            Ok(l) => {
                labels.insert(key.clone(), (l.visible_fraction, l.visible, l.n_frames));
            }
            Err(FusionError::NoUsableFrames) => {
                debug!("{key}: no classified frames; day dropped");
                stats.days_without_label += 1;
            }
            Err(e) => return Err(e),
        }
    }
    let binary: BTreeMap<DayKey, bool> = labels.iter().map(|(k, v)| (k.clone(), v.1)).collect();
    let targets = shift_targets(&binary, &config.horizons);
    let site_of: BTreeMap<&str, &CameraSite> = sites.iter().map(|s| (s.camera_id.as_str(), s)).collect();

    let keyed: Vec<(&DayKey, &Vec<JoinedFrame>)> = days.iter().filter(|(k, _)| labels.contains_key(*k)).collect();
    let built: Vec<(DayExample, Provenance)> = keyed
        .par_iter()
        .filter_map(|(key, rows)| {
            let features = match config.snapshot_kind {
                SnapshotKind::FirstFrame => snapshot_first_frame(rows),
                SnapshotKind::MorningWindow => snapshot_morning_window(rows),
            }?;
            let (visible_fraction, label_today, n) = labels[*key];
            let site = site_of.get(key.camera_id.as_str());
            let example = DayExample {
                key: (*key).clone(),
                snapshot_kind: config.snapshot_kind,
                features,
                latitude: site.map(|s| s.latitude),
                longitude: site.map(|s| s.longitude),
                visible_fraction,
                label_today,
                targets: targets[*key],
            };
            let prov = Provenance::of(&example, n);
            Some((example, prov))
        })
        .collect();
    stats.days_labeled = built.len();
    stats.fallbacks = built.iter().filter(|(e, _)| e.features.fallback).count();
    info!(
        "{} days from {} usable frames ({} unlabeled, {} window fallbacks)",
        stats.days_labeled, stats.usable_frames, stats.days_without_label, stats.fallbacks
    );
    let (examples, provenance) = built.into_iter().unzip();
    Ok((examples, provenance, stats))
}

/// Encoded examples with their targets, as stored under `fused/<kind>/`.
#[derive(Debug, Clone)]
pub struct FusedDataset {
    pub encoder: FeatureEncoder,
    pub matrix: FeatureMatrix,
    pub targets: Vec<Targets>,
    pub provenance: Vec<Provenance>,
}

#[derive(Serialize, Deserialize)]
struct SchemaFile {
    schema_version: u32,
    snapshot_kind: SnapshotKind,
    rows: usize,
    columns: Vec<ColumnSpec>,
}

const KEY_COLUMNS: [&str; 7] = ["camera_id", "date", "group_id", "target_0d", "target_1d", "target_2d", "target_3d"];

impl FusedDataset {
    /// Encodes with `encoder`, or with one fitted on `examples` when `None`.
    pub fn from_examples(
        examples: &[DayExample],
        provenance: Vec<Provenance>,
        encoder: Option<FeatureEncoder>,
    ) -> Result<Self, FusionError> {
        let encoder = encoder.unwrap_or_else(|| FeatureEncoder::fit(examples));
        let matrix = encoder.encode(examples)?;
        Ok(Self { encoder, matrix, targets: examples.iter().map(|e| e.targets).collect(), provenance })
    }

    pub fn snapshot_kind(&self) -> SnapshotKind {
        self.matrix.snapshot_kind
    }

    /// Rows with a target at `h`, and those targets.
    pub fn rows_with_target(&self, h: Horizon) -> (Vec<usize>, Vec<bool>) {
        self.targets.iter().enumerate().filter_map(|(i, t)| t.get(h).map(|y| (i, y))).unzip()
    }

    pub fn save(&self, dir: &Path) -> Result<(), FusionError> {
        std::fs::create_dir_all(dir).map_err(|e| FusionError::io(dir, e))?;
        let m = &self.matrix;
        let mut csv = String::new();
        csv.push_str(&KEY_COLUMNS.join(","));
        for c in &m.schema {
            csv.push(',');
            csv.push_str(&c.name);
        }
        csv.push('\n');
        for (i, key) in m.keys.iter().enumerate() {
            if key.camera_id.contains([',', '"', '\n']) {
                return Err(FusionError::format(dir, format!("camera id `{}` not CSV-safe", key.camera_id)));
            }
            write!(csv, "{},{},{}", key.camera_id, key.date, m.group_ids[i]).expect("string write");
            for t in self.targets[i].0 {
                csv.push(',');
                if let Some(y) = t {
                    csv.push(if y { '1' } else { '0' });
                }
            }
            for v in m.values.row(i) {
                write!(csv, ",{v}").expect("string write");
            }
            csv.push('\n');
        }
        write_file(&dir.join("matrix.csv"), &csv)?;
        let schema = SchemaFile {
            schema_version: DATASET_SCHEMA_VERSION,
            snapshot_kind: m.snapshot_kind,
            rows: m.n_rows(),
            columns: m.schema.clone(),
        };
        write_file(&dir.join("schema.json"), &to_pretty(&schema))?;
        write_file(&dir.join("encoder.json"), &to_pretty(&self.encoder))?;
        let mut prov = String::new();
        for p in &self.provenance {
            prov.push_str(&serde_json::to_string(p).expect("provenance serializes"));
            prov.push('\n');
        }
        write_file(&dir.join("provenance.jsonl"), &prov)
    }

    pub fn load(dir: &Path) -> Result<Self, FusionError> {
        let schema_path = dir.join("schema.json");
        let schema: SchemaFile =
            serde_json::from_str(&read_file(&schema_path)?).map_err(|e| FusionError::format(&schema_path, e))?;
        if schema.schema_version != DATASET_SCHEMA_VERSION {
            return Err(FusionError::format(&schema_path, format!("schema version {}", schema.schema_version)));
        }
        let enc_path = dir.join("encoder.json");
        let encoder: FeatureEncoder =
            serde_json::from_str(&read_file(&enc_path)?).map_err(|e| FusionError::format(&enc_path, e))?;
        if encoder.schema() != schema.columns {
            return Err(FusionError::format(&enc_path, "encoder does not reproduce the stored schema"));
        }

        let csv_path = dir.join("matrix.csv");
        let text = read_file(&csv_path)?;
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
        let expected: Vec<&str> =
            KEY_COLUMNS.iter().copied().chain(schema.columns.iter().map(|c| c.name.as_str())).collect();
        if header != expected {
            return Err(FusionError::format(&csv_path, "header does not match schema.json"));
        }
        let width = schema.columns.len();
        let mut keys = Vec::new();
        let mut group_ids = Vec::new();
        let mut targets = Vec::new();
        let mut values = Vec::with_capacity(schema.rows * width);
        for (n, line) in lines.enumerate() {
            let bad = |msg: String| FusionError::format(&csv_path, format!("line {}: {msg}", n + 2));
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != KEY_COLUMNS.len() + width {
                return Err(bad(format!("{} cells, expected {}", cells.len(), KEY_COLUMNS.len() + width)));
            }
            let date = cells[1].parse::<NaiveDate>().map_err(|e| bad(e.to_string()))?;
            keys.push(DayKey::new(cells[0], date));
            group_ids.push(cells[2].to_string());
            let mut t = Targets::default();
            for h in 0..4 {
                t.0[h] = match cells[3 + h] {
                    "" => None,
                    "1" => Some(true),
                    "0" => Some(false),
                    other => return Err(bad(format!("bad target `{other}`"))),
                };
            }
            targets.push(t);
            for cell in &cells[KEY_COLUMNS.len()..] {
                values.push(cell.parse::<f64>().map_err(|e| bad(format!("`{cell}`: {e}")))?);
            }
        }
        if keys.len() != schema.rows {
            return Err(FusionError::format(&csv_path, format!("{} rows, schema says {}", keys.len(), schema.rows)));
        }
        let prov_path = dir.join("provenance.jsonl");
        let provenance = read_file(&prov_path)?
            .lines()
            .map(|l| serde_json::from_str(l).map_err(|e| FusionError::format(&prov_path, e)))
            .collect::<Result<Vec<Provenance>, _>>()?;
        let n = keys.len();
        Ok(Self {
            encoder,
            matrix: FeatureMatrix {
                snapshot_kind: schema.snapshot_kind,
                schema: schema.columns,
                keys,
                group_ids,
                values: Matrix::new(values, n, width).map_err(|e| FusionError::format(&csv_path, e))?,
            },
            targets,
            provenance,
        })
    }
}

fn to_pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializes");
    s.push('\n');
    s
}

fn write_file(path: &Path, body: &str) -> Result<(), FusionError> {
    std::fs::write(path, body).map_err(|e| FusionError::io(path, e))
}

fn read_file(path: &Path) -> Result<String, FusionError> {
    std::fs::read_to_string(path).map_err(|e| FusionError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{local_instant, QcStatus, Timestamp, VisionProbs};
    use chrono::NaiveTime;

    fn at(day: u32, h: u32, m: u32) -> Timestamp {
        local_instant(NaiveDate::from_ymd_opt(2025, 6, day).unwrap(), NaiveTime::from_hms_opt(h, m, 0).unwrap())
    }

    fn frame(day: u32, h: u32, m: u32, visible: bool) -> FrameRecord {
        let probs = if visible { [0.7, 0.1, 0.1, 0.1] } else { [0.1, 0.1, 0.1, 0.7] };
        FrameRecord {
            camera_id: "cam".into(),
            captured_at: at(day, h, m),
            image_path: String::new(),
            qc_status: Some(QcStatus::Ok),
            human_label: None,
            vision_probs: Some(VisionProbs::from_array(probs).unwrap()),
            grayness: None,
            content_digest: None,
        }
    }

    fn fixture() -> (Vec<FrameRecord>, Vec<WeatherRecord>) {
        let mut frames = Vec::new();
        let mut weather = Vec::new();
        for day in 1..=5 {
            if day == 3 {
                continue;
            }
            for (h, m) in [(0, 30), (2, 0), (6, 0), (9, 30)] {
                frames.push(frame(day, h, m, day % 2 == 1));
                for lead in 0..=3 {
                    let mut w = WeatherRecord::empty("cam", at(day + lead, h, m), lead as i8);
                    w.cloud_cover_pct = Some(f64::from(10 * day + lead));
                    weather.push(w);
                }
            }
        }
        (frames, weather)
    }

    #[test]
    fn builds_days_with_shifted_targets() {
        let (frames, weather) = fixture();
        let (examples, prov, stats) = build_examples(&frames, &weather, &[], &FusionConfig::default()).unwrap();
        assert_eq!(examples.len(), 4);
        assert_eq!(stats.days_labeled, 4);
        let d1 = &examples[0];
        assert_eq!(d1.key.date, NaiveDate::from_ymd_opt(2025, 6, 1).unwrap());
        assert_eq!(d1.targets.0, [Some(true), Some(false), None, Some(false)]);
        assert_eq!(d1.features.frames_used, vec![at(1, 0, 30)]);
        assert_eq!(d1.features.weather[2].get(crate::model::WeatherVariable::CloudCover), Some(12.0));
        assert_eq!(prov[0].label_frames, 4);
    }

    #[test]
    fn morning_window_never_uses_late_frames() {
        let (frames, weather) = fixture();
        let cfg = FusionConfig { snapshot_kind: SnapshotKind::MorningWindow, ..Default::default() };
        let (examples, prov, _) = build_examples(&frames, &weather, &[], &cfg).unwrap();
        for (e, p) in examples.iter().zip(&prov) {
            assert_eq!(p.feature_frames.len(), 2);
            for &t in &e.features.frames_used {
                assert_eq!(local_date(t), e.key.date);
                assert!(crate::model::local_time(t) < super::super::WINDOW_END);
            }
        }
    }

    #[test]
    fn no_usable_frames() {
        let (mut frames, weather) = fixture();
        for f in &mut frames {
            f.qc_status = Some(QcStatus::BadGray);
        }
        assert!(matches!(
            build_examples(&frames, &weather, &[], &FusionConfig::default()),
            Err(FusionError::NoUsableFrames)
        ));
    }

    #[test]
    fn save_load_round_trip_keeps_nan() {
        let (frames, weather) = fixture();
        let (examples, prov, _) = build_examples(&frames, &weather, &[], &FusionConfig::default()).unwrap();
        let ds = FusedDataset::from_examples(&examples, prov, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        ds.save(dir.path()).unwrap();
        let back = FusedDataset::load(dir.path()).unwrap();
        assert_eq!(back.matrix.keys, ds.matrix.keys);
        assert_eq!(back.targets, ds.targets);
        assert_eq!(back.matrix.schema, ds.matrix.schema);
        for i in 0..ds.matrix.n_rows() {
            for (a, b) in ds.matrix.values.row(i).iter().zip(back.matrix.values.row(i)) {
                assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
            }
        }
        assert!(ds.matrix.values.row(0)[0..].iter().any(|v| v.is_nan()));
    }
}
