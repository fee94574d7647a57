use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{DayKey, FusionError};
use crate::model::{is_visible, FrameRecord, Horizon, VisibilityClass};

/// Where a frame's class comes from when aggregating day labels.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LabelSource {
    /// Argmax of the vision probabilities; keeps human labels out of targets.
    #[default]
    Vision,
    /// Human labels, for validating the pipeline against ground truth.
    Gold,
}

impl LabelSource {
    pub fn class_of(self, frame: &FrameRecord) -> Option<VisibilityClass> {
        match self {
            Self::Vision => frame.vision_probs.map(|p| p.argmax()),
            Self::Gold => frame.human_label,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DayLabel {
    pub visible_fraction: f64,
    pub visible: bool,
    pub n_frames: usize,
}

/// Fraction of frames whose class is visible, and whether it reaches `theta`
/// (inclusive). BAD frames are ignored.
pub fn day_label(classes: &[VisibilityClass], theta: f64) -> Result<DayLabel, FusionError> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(FusionError::InvalidTheta(theta));
    }
    let mut visible = 0usize;
    let mut n = 0usize;
    for &c in classes {
        if c == VisibilityClass::Bad {
            continue;
        }
        n += 1;
        if is_visible(c)? {
            visible += 1;
        }
    }
    if n == 0 {
        return Err(FusionError::NoUsableFrames);
    }
    let visible_fraction = visible as f64 / n as f64;
    Ok(DayLabel { visible_fraction, visible: visible_fraction >= theta, n_frames: n })
}

/// Binary targets for horizons +0d..+3d; `None` where day `d+h` has no label.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Targets(pub [Option<bool>; 4]);

impl Targets {
    pub fn get(&self, h: Horizon) -> Option<bool> {
        self.0[h.days() as usize]
    }
}

/// `targets(c, d)[h] = label(c, d + h)`, absent when that day is unlabeled
/// or `h` is not requested.
pub fn shift_targets(labels: &BTreeMap<DayKey, bool>, horizons: &[Horizon]) -> BTreeMap<DayKey, Targets> {
    labels
        .keys()
        .map(|key| {
            let mut t = Targets::default();
            for &h in horizons {
                let ahead = DayKey::new(key.camera_id.clone(), key.date + chrono::Days::new(u64::from(h.days())));
                t.0[h.days() as usize] = labels.get(&ahead).copied();
            }
            (key.clone(), t)
        })
        .collect()
}
