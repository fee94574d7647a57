use chrono::{NaiveTime, Timelike};
use serde::{Deserialize, Serialize};

use super::JoinedFrame;
use crate::model::{local_time, Timestamp, VisionProbs, WeatherRecord, WeatherVariable};

/// Exclusive end of the morning window, local time.
pub const WINDOW_END: NaiveTime = match NaiveTime::from_hms_opt(3, 0, 0) {
    Some(t) => t,
    None => panic!("valid time"),
};

/// Values for every [`WeatherVariable`], in `WeatherVariable::ALL` order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WeatherSummary(pub [Option<f64>; 10]);

impl WeatherSummary {
    pub fn from_record(record: Option<&WeatherRecord>) -> Self {
        match record {
            Some(r) => Self(WeatherVariable::ALL.map(|v| r.get(v))),
            None => Self::default(),
        }
    }

    pub fn get(&self, var: WeatherVariable) -> Option<f64> {
        self.0[var as usize]
    }
}

/// Snapshot inputs for one day, before encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayFeatures {
    pub vision: Option<VisionProbs>,
    /// Current weather then forecasts for leads 1..=3.
    pub weather: [WeatherSummary; 4],
    /// Local minutes after midnight of the frame(s) used.
    pub local_minutes: f64,
    /// Morning window was empty and the first frame was used instead.
    pub fallback: bool,
    pub frames_used: Vec<Timestamp>,
}

fn minutes_of(ts: Timestamp) -> f64 {
    let t = local_time(ts);
    f64::from(t.hour() * 60 + t.minute())
}

/// Features of the earliest usable frame of the day.
pub fn snapshot_first_frame(rows: &[JoinedFrame]) -> Option<DayFeatures> {
    let first = rows.iter().filter(|r| r.frame.is_usable()).min_by_key(|r| r.frame.captured_at)?;
    Some(DayFeatures {
        vision: first.frame.vision_probs,
        weather: std::array::from_fn(|i| WeatherSummary::from_record(first.weather[i].as_ref())),
        local_minutes: minutes_of(first.frame.captured_at),
        fallback: false,
        frames_used: vec![first.frame.captured_at],
    })
}

/// Averages usable frames captured in `[00:00, 03:00)` local time. Vision
/// means are renormalised, weather codes take the modal value and wind
/// direction a circular mean. Falls back to the first frame, flagged, when
/// the window is empty.
pub fn snapshot_morning_window(rows: &[JoinedFrame]) -> Option<DayFeatures> {
    let mut window: Vec<&JoinedFrame> =
        rows.iter().filter(|r| r.frame.is_usable() && local_time(r.frame.captured_at) < WINDOW_END).collect();
    if window.is_empty() {
        let mut snap = snapshot_first_frame(rows)?;
        log::debug!("morning window empty; using first frame at {}", snap.frames_used[0]);
        snap.fallback = true;
        return Some(snap);
    }
    window.sort_by_key(|r| r.frame.captured_at);

    let probs: Vec<[f64; 4]> = window.iter().filter_map(|r| r.frame.vision_probs.map(|p| p.as_array())).collect();
    let vision = if probs.is_empty() {
        None
    } else {
        let mut sum = [0.0; 4];
        for p in &probs {
            for (s, v) in sum.iter_mut().zip(p) {
                *s += v;
            }
        }
        VisionProbs::normalized(sum.map(|s| s / probs.len() as f64)).ok()
    };

    let weather = std::array::from_fn(|lead| {
        let mut summary = WeatherSummary::default();
        for var in WeatherVariable::ALL {
            let values: Vec<f64> = window.iter().filter_map(|r| r.weather[lead].as_ref()?.get(var)).collect();
            summary.0[var as usize] = match var {
                WeatherVariable::WeatherCode => modal_earliest(&values),
                WeatherVariable::WindDirection => circular_mean_deg(&values),
                _ => mean(&values),
            };
        }
        summary
    });

    let local_minutes = window.iter().map(|r| minutes_of(r.frame.captured_at)).sum::<f64>() / window.len() as f64;
    Some(DayFeatures {
        vision,
        weather,
        local_minutes,
        fallback: false,
        frames_used: window.iter().map(|r| r.frame.captured_at).collect(),
    })
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Most frequent value; ties go to whichever tied value appears first.
fn modal_earliest(values: &[f64]) -> Option<f64> {
    let mut best: Option<(f64, usize)> = None;
    for &v in values {
        let count = values.iter().filter(|&&x| x == v).count();
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((v, count));
        }
    }
    best.map(|(v, _)| v)
}

/// Mean direction in degrees; `None` when the directions cancel out.
fn circular_mean_deg(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let (s, c) = values.iter().fold((0.0, 0.0), |(s, c), d| (s + d.to_radians().sin(), c + d.to_radians().cos()));
    if s.hypot(c) < 1e-9 * values.len() as f64 {
        return None;
    }
    Some(s.atan2(c).to_degrees().rem_euclid(360.0))
}
