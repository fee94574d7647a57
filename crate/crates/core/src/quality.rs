//! Frame quality control: grayness flagging, exact duplicate detection and
//! corruption checks.

use std::collections::HashMap;
use std::path::Path;

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{FrameKey, FrameRecord, QcStatus};

pub const DEFAULT_GRAY_THRESHOLD: f64 = 0.40;
/// Pixels whose channels differ by at most this much are near-achromatic.
pub const GRAY_CHANNEL_SPREAD: u8 = 12;
/// Pixels darker than this (BT.601 luma) are near-black.
pub const DARK_LUMA: f64 = 20.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QualityError {
    #[error("image has no pixels")]
    EmptyRaster,
    #[error("grayness threshold {0} outside (0, 1]")]
    InvalidThreshold(f64),
    #[error("grayness {0} outside [0, 1]")]
    InvalidGrayness(f64),
    #[error("frame {0} has no content digest")]
    MissingDigest(FrameKey),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcReport {
    pub frame_key: FrameKey,
    pub grayness: Option<f64>,
    pub duplicate_of: Option<FrameKey>,
    pub verdict: QcStatus,
    pub needs_review: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl QcReport {
    fn new(frame_key: FrameKey, verdict: QcStatus) -> Self {
        Self { frame_key, grayness: None, duplicate_of: None, verdict, needs_review: false, message: None }
    }
}

pub fn is_gray_pixel([r, g, b]: [u8; 3]) -> bool {
    let spread = r.max(g).max(b) - r.min(g).min(b);
    let luma = 0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b);
    spread <= GRAY_CHANNEL_SPREAD || luma < DARK_LUMA
}

/// Fraction of pixels that are near-achromatic or near-black.
pub fn grayness_fraction(pixels: &RgbImage) -> Result<f64, QualityError> {
    let total = pixels.width() as usize * pixels.height() as usize;
    if total == 0 {
        return Err(QualityError::EmptyRaster);
    }
    let gray = pixels.pixels().filter(|p| is_gray_pixel(p.0)).count();
    Ok(gray as f64 / total as f64)
}

/// Decodes any supported format and converts it to 8-bit RGB first.
pub fn grayness_of_file(path: &Path) -> Result<f64, String> {
    let img = image::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    grayness_fraction(&img.to_rgb8()).map_err(|e| format!("{}: {e}", path.display()))
}

pub fn validate_threshold(threshold: f64) -> Result<(), QualityError> {
    if threshold > 0.0 && threshold <= 1.0 {
        Ok(())
    } else {
        Err(QualityError::InvalidThreshold(threshold))
    }
}

/// BAD_GRAY iff `grayness > threshold`; flagged frames need human review.
pub fn flag_gray(frame: &FrameRecord, grayness: f64, threshold: f64) -> Result<QcReport, QualityError> {
    validate_threshold(threshold)?;
    if !(0.0..=1.0).contains(&grayness) {
        return Err(QualityError::InvalidGrayness(grayness));
    }
    let flagged = grayness > threshold;
    let mut report = QcReport::new(frame.key(), if flagged { QcStatus::BadGray } else { QcStatus::Ok });
    report.grayness = Some(grayness);
    report.needs_review = flagged;
    Ok(report)
}

/// Content digest → first frame seen with it.
#[derive(Debug, Clone, Default)]
pub struct DigestIndex {
    first_seen: HashMap<String, FrameKey>,
}

impl DigestIndex {
    pub fn len(&self) -> usize {
        self.first_seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first_seen.is_empty()
    }

    pub fn get(&self, digest: &str) -> Option<&FrameKey> {
        self.first_seen.get(digest)
    }
}

/// DUPLICATE iff the digest is already indexed under another frame, across
/// all cameras. Otherwise the frame becomes the digest's owner.
pub fn duplicate_check(frame: &FrameRecord, index: &mut DigestIndex) -> Result<QcReport, QualityError> {
    let digest = frame.content_digest.as_deref().ok_or_else(|| QualityError::MissingDigest(frame.key()))?;
    let key = frame.key();
    match index.first_seen.get(digest) {
        Some(owner) if *owner != key => {
            let mut report = QcReport::new(key, QcStatus::Duplicate);
            report.duplicate_of = Some(owner.clone());
            Ok(report)
        }
        Some(_) => Ok(QcReport::new(key, QcStatus::Ok)),
        None => {
            index.first_seen.insert(digest.to_string(), key.clone());
            Ok(QcReport::new(key, QcStatus::Ok))
        }
    }
}

/// Full QC pass over a batch. Frames are processed in key order so that the
/// earliest copy of duplicated content keeps it. Verdict precedence is
/// CORRUPT, then DUPLICATE, then BAD_GRAY.
pub fn run_qc(
    frames: &[FrameRecord],
    index: &mut DigestIndex,
    threshold: f64,
    image_root: &Path,
) -> Result<Vec<QcReport>, QualityError> {
    validate_threshold(threshold)?;
    let mut order: Vec<&FrameRecord> = frames.iter().collect();
    order.sort_by_key(|f| f.key());
    let grayness: Vec<Option<Result<f64, String>>> = order
        .par_iter()
        .map(|f| {
            if f.qc_status == Some(QcStatus::Corrupt) || f.content_digest.is_none() {
                None
            } else {
                Some(grayness_of_file(&image_root.join(&f.image_path)))
            }
        })
        .collect();

    let mut reports = Vec::with_capacity(order.len());
    for (frame, gray) in order.into_iter().zip(grayness) {
        let gray = match gray {
            None => {
                let mut r = QcReport::new(frame.key(), QcStatus::Corrupt);
                r.message = Some("empty or unreadable file".into());
                reports.push(r);
                continue;
            }
            Some(Err(msg)) => {
                let mut r = QcReport::new(frame.key(), QcStatus::Corrupt);
                r.message = Some(msg);
                reports.push(r);
                continue;
            }
            Some(Ok(g)) => g,
        };
        let dup = duplicate_check(frame, index)?;
        let mut report = if dup.verdict == QcStatus::Duplicate { dup } else { flag_gray(frame, gray, threshold)? };
        report.grayness = Some(gray);
        reports.push(report);
    }
    Ok(reports)
}
