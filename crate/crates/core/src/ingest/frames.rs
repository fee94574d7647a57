use std::path::{Path, PathBuf};

use chrono::{NaiveDate, NaiveDateTime};
use log::warn;
use sha2::{Digest, Sha256};

use super::IngestError;
use crate::model::{floor_to_grid, FrameRecord, QcStatus, Timestamp};

/// Captures dated before this are rejected as clock faults.
pub const EARLIEST_PLAUSIBLE: NaiveDate = match NaiveDate::from_ymd_opt(2020, 1, 1) {
    Some(d) => d,
    None => panic!("valid date"),
};

const DROP_NAME_FORMAT: &str = "%Y%m%dT%H%MZ";

/// Builds the record for one captured image. Unreadable or empty files are
/// kept as CORRUPT so the gap stays visible downstream; anything else waits
/// for QC with `qc_status == None`.
pub fn ingest_frame(
    image: &Path,
    camera_id: &str,
    captured_at: Timestamp,
    now: Timestamp,
) -> Result<FrameRecord, IngestError> {
    if captured_at.date_naive() < EARLIEST_PLAUSIBLE || captured_at > now {
        return Err(IngestError::ImplausibleTimestamp(captured_at));
    }
    let mut record = FrameRecord {
        camera_id: camera_id.to_string(),
        captured_at: floor_to_grid(captured_at),
        image_path: image.to_string_lossy().into_owned(),
        qc_status: None,
        human_label: None,
        vision_probs: None,
        grayness: None,
        content_digest: None,
    };
    match std::fs::read(image) {
        Ok(bytes) if !bytes.is_empty() => record.content_digest = Some(hex::encode(Sha256::digest(&bytes))),
        Ok(_) => {
            warn!("{}: zero-byte image {}", record.key(), image.display());
            record.qc_status = Some(QcStatus::Corrupt);
        }
        Err(e) => {
            warn!("{}: unreadable image {}: {e}", record.key(), image.display());
            record.qc_status = Some(QcStatus::Corrupt);
        }
    }
    Ok(record)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct DroppedFrame {
    pub camera_id: String,
    pub captured_at: Timestamp,
    pub path: PathBuf,
}

/// Lists `<drop>/<camera_id>/<YYYYMMDDTHHMMZ>.<ext>` files, sorted by camera
/// and time. Files whose names don't parse are skipped with a warning.
pub fn scan_drop_dir(drop: &Path) -> Result<Vec<DroppedFrame>, IngestError> {
    let mut out = Vec::new();
    let cameras = std::fs::read_dir(drop).map_err(|e| IngestError::io(drop, e))?;
    for camera in cameras {
        let camera = camera.map_err(|e| IngestError::io(drop, e))?;
        if !camera.file_type().map_err(|e| IngestError::io(&camera.path(), e))?.is_dir() {
            continue;
        }
        let camera_id = camera.file_name().to_string_lossy().into_owned();
        let dir = camera.path();
        for entry in std::fs::read_dir(&dir).map_err(|e| IngestError::io(&dir, e))? {
            let path = entry.map_err(|e| IngestError::io(&dir, e))?.path();
            let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else { continue };
            match NaiveDateTime::parse_from_str(stem, DROP_NAME_FORMAT) {
                Ok(t) => out.push(DroppedFrame { camera_id: camera_id.clone(), captured_at: t.and_utc(), path }),
                Err(_) => warn!("skipping {}: name is not a capture time", path.display()),
            }
        }
    }
    out.sort();
    Ok(out)
}

/// File name used when frames are written into a drop directory.
pub fn drop_file_name(captured_at: Timestamp, extension: &str) -> String {
    format!("{}.{extension}", captured_at.format(DROP_NAME_FORMAT))
}
