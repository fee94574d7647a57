use std::collections::HashMap;

use chrono::Duration;
use log::debug;

use crate::model::{FrameRecord, WeatherRecord};

/// Weather leads carried into features: current conditions and forecasts
/// for the next three days.
pub const FEATURE_LEADS: [i8; 4] = [0, 1, 2, 3];
pub const ALIGN_TOLERANCE: Duration = Duration::minutes(30);

/// A usable frame with the weather record matched for each lead in
/// [`FEATURE_LEADS`]; `None` where nothing fell within tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct JoinedFrame {
    pub frame: FrameRecord,
    pub weather: [Option<WeatherRecord>; 4],
}

/// Joins each usable frame to the nearest weather record per lead bucket.
///
/// For lead `k` the record must be valid near `captured_at + k days`, i.e. the
/// forecast issued at capture time for the same clock time `k` days later.
/// Equal distances resolve to the earlier record. Output is in frame key
/// order.
pub fn align_frame_weather(frames: &[FrameRecord], weather: &[WeatherRecord], tolerance: Duration) -> Vec<JoinedFrame> {
    let mut index: HashMap<(&str, i8), Vec<&WeatherRecord>> = HashMap::new();
    for w in weather {
        if FEATURE_LEADS.contains(&w.lead_days) {
            index.entry((w.camera_id.as_str(), w.lead_days)).or_default().push(w);
        }
    }
    for series in index.values_mut() {
        series.sort_by_key(|w| w.valid_at);
    }

    let mut out: Vec<JoinedFrame> = frames
        .iter()
        .filter(|f| f.is_usable())
        .map(|frame| {
            let weather = FEATURE_LEADS.map(|lead| {
                let series = index.get(&(frame.camera_id.as_str(), lead))?;
                let target = frame.captured_at + Duration::days(i64::from(lead));
                let i = series.partition_point(|w| w.valid_at < target);
                let before = i.checked_sub(1).map(|j| series[j]);
                let after = series.get(i).copied();
                let pick = match (before, after) {
                    (Some(b), Some(a)) => {
                        if target - b.valid_at <= a.valid_at - target {
                            b
                        } else {
                            a
                        }
                    }
                    (Some(b), None) => b,
                    (None, Some(a)) => a,
                    (None, None) => return None,
                };
                ((pick.valid_at - target).abs() <= tolerance).then(|| pick.clone())
            });
            if weather[0].is_none() {
                debug!("{}: no current weather within {tolerance}", frame.key());
            }
            JoinedFrame { frame: frame.clone(), weather }
        })
        .collect();
    out.sort_by_key(|j| j.frame.key());
    out
}
