//! Synthetic oracle dataset with a known latent visibility state per
//! camera-day, used for desk-scale acceptance.
//!
//! Each camera runs an independent two-state Markov chain over days. Frames
//! follow the day's state, the vision classifier sees the frame class through
//! logit noise, and every weather record is a noisy view of the state of its
//! valid day. Forecast error is drawn once per (issue day, lead) and grows
//! with the lead, so forecasts degrade with horizon the way real ones do.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Duration, NaiveDate, NaiveTime};
use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::EvalError;
use crate::fusion::DayKey;
use crate::ingest::drop_file_name;
use crate::model::{local_instant, CameraSite, FrameRecord, QcStatus, VisibilityClass, VisionProbs, WeatherRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_cameras: usize,
    pub n_days: usize,
    pub seed: u64,
    pub start_date: NaiveDate,
    /// Probability that tomorrow's state equals today's.
    pub persistence: f64,
    pub frames_per_day: usize,
    /// Probability that a frame's class disagrees with the day state.
    pub frame_flip: f64,
    /// Logit boost of the true class in the vision output.
    pub vision_kappa: f64,
    /// Standard deviation of per-class logit noise.
    pub vision_noise: f64,
    /// Cloud-cover error (percentage points) of current conditions.
    pub now_noise: f64,
    /// Cloud-cover error of a lead-h forecast is `base + per_day * h`.
    pub forecast_noise_base: f64,
    pub forecast_noise_per_day: f64,
    pub hourly_jitter: f64,
    pub missing_rate: f64,
    pub bad_gray_rate: f64,
    pub max_lead: i8,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_cameras: 42,
            n_days: 120,
            seed: 0,
            start_date: NaiveDate::from_ymd_opt(2025, 1, 1).expect("valid date"),
            persistence: 0.7,
            frames_per_day: 24,
            frame_flip: 0.05,
            vision_kappa: 2.0,
            vision_noise: 0.5,
            now_noise: 40.0,
            forecast_noise_base: 25.0,
            forecast_noise_per_day: 12.0,
            hourly_jitter: 3.0,
            missing_rate: 0.02,
            bad_gray_rate: 0.02,
            max_lead: 3,
        }
    }
}

impl SynthConfig {
    /// Every observation equals the latent state: no flips, no noise, no
    /// missing values, no gray frames.
    pub fn noiseless(n_cameras: usize, n_days: usize, seed: u64) -> Self {
        Self {
            n_cameras,
            n_days,
            seed,
            frame_flip: 0.0,
            vision_noise: 0.0,
            now_noise: 0.0,
            forecast_noise_base: 0.0,
            forecast_noise_per_day: 0.0,
            hourly_jitter: 0.0,
            missing_rate: 0.0,
            bad_gray_rate: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: String| Err(EvalError::InvalidConfig(m));
        if self.n_days < 30 {
            return bad(format!("n_days {} < 30", self.n_days));
        }
        if self.n_cameras == 0 || self.frames_per_day == 0 || self.frames_per_day > 48 {
            return bad("n_cameras must be positive and frames_per_day in 1..=48".into());
        }
        for (name, p) in [
            ("persistence", self.persistence),
            ("frame_flip", self.frame_flip),
            ("missing_rate", self.missing_rate),
            ("bad_gray_rate", self.bad_gray_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} {p} outside [0, 1]"));
            }
        }
        for (name, s) in [
            ("vision_noise", self.vision_noise),
            ("now_noise", self.now_noise),
            ("forecast_noise_base", self.forecast_noise_base),
            ("forecast_noise_per_day", self.forecast_noise_per_day),
            ("hourly_jitter", self.hourly_jitter),
        ] {
            if !(s >= 0.0 && s.is_finite()) {
                return bad(format!("{name} {s} must be finite and non-negative"));
            }
        }
        if !(0..=WeatherRecord::MAX_LEAD).contains(&self.max_lead) {
            return bad(format!("max_lead {} outside 0..=6", self.max_lead));
        }
        Ok(())
    }

    fn noise_at_lead(&self, lead: i8) -> f64 {
        match lead {
            l if l < 0 => self.hourly_jitter,
            0 => self.now_noise,
            l => self.forecast_noise_base + self.forecast_noise_per_day * f64::from(l),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub sites: Vec<CameraSite>,
    pub frames: Vec<FrameRecord>,
    pub weather: Vec<WeatherRecord>,
    /// Latent state per camera-day: `true` means visible.
    pub gold: BTreeMap<DayKey, bool>,
}

/// Hours of the morning covered by weather samples, local time.
const WEATHER_HOURS: u32 = 12;

fn normal(sd: f64) -> Normal<f64> {
    Normal::new(0.0, sd).expect("finite non-negative sd")
}

pub fn synth_generate(config: &SynthConfig) -> Result<SynthData, EvalError> {
    config.validate()?;
    let per_camera: Vec<_> = (0..config.n_cameras).into_par_iter().map(|i| synth_camera(config, i)).collect();
    let mut data = SynthData { sites: Vec::new(), frames: Vec::new(), weather: Vec::new(), gold: BTreeMap::new() };
    for (site, frames, weather, gold) in per_camera {
        data.sites.push(site);
        data.frames.extend(frames);
        data.weather.extend(weather);
        data.gold.extend(gold);
    }
    Ok(data)
}

type CameraData = (CameraSite, Vec<FrameRecord>, Vec<WeatherRecord>, BTreeMap<DayKey, bool>);

fn synth_camera(c: &SynthConfig, index: usize) -> CameraData {
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    rng.set_stream(index as u64);
    let camera_id = format!("cam{:02}", index + 1);
    let site = CameraSite {
        camera_id: camera_id.clone(),
        latitude: 35.0 + 0.05 * (index % 7) as f64,
        longitude: 138.5 + 0.05 * (index / 7) as f64,
        display_name: format!("Synthetic camera {}", index + 1),
    };

    // States for the observed days plus the days forecasts issued near the
    // end can reach.
    let total = c.n_days + c.max_lead as usize;
    let mut states = Vec::with_capacity(total + 1);
    states.push(rng.random_bool(0.5));
    for d in 0..total {
        let stay = rng.random_bool(c.persistence);
        states.push(if stay { states[d] } else { !states[d] });
    }
    // states[0] is the day before the start, so day d's state is states[d + 1]
    let state = |d: i64| states[(d + 1) as usize];
    let date = |d: i64| c.start_date + Duration::days(d);

    let mut frames = Vec::with_capacity(c.n_days * c.frames_per_day);
    let mut weather = Vec::new();
    let mut gold = BTreeMap::new();
    let logit = normal(c.vision_noise);
    for d in 0..c.n_days as i64 {
        let visible = state(d);
        gold.insert(DayKey::new(camera_id.clone(), date(d)), visible);
        for slot in 0..c.frames_per_day {
            let minutes = 30 * slot as u32;
            let time = NaiveTime::from_hms_opt(minutes / 60, minutes % 60, 0).expect("morning slot");
            let captured_at = local_instant(date(d), time);
            let mut frame = FrameRecord {
                camera_id: camera_id.clone(),
                captured_at,
                image_path: String::new(),
                qc_status: Some(QcStatus::Ok),
                human_label: None,
                vision_probs: None,
                grayness: None,
                content_digest: None,
            };
            if rng.random_bool(c.bad_gray_rate) {
                frame.qc_status = Some(QcStatus::BadGray);
                frame.human_label = Some(VisibilityClass::Bad);
                frame.grayness = Some(1.0);
            } else {
                let shown = visible != rng.random_bool(c.frame_flip);
                let pick = usize::from(rng.random_bool(0.5));
                let class = if shown {
                    [VisibilityClass::Perfect, VisibilityClass::Clear][pick]
                } else {
                    [VisibilityClass::Cloudy, VisibilityClass::Obscured][pick]
                };
                let mut z = [0.0; 4];
                for (k, v) in z.iter_mut().enumerate() {
                    *v =
                        logit.sample(&mut rng) + if VisibilityClass::VISION[k] == class { c.vision_kappa } else { 0.0 };
                }
                let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                frame.vision_probs =
                    Some(VisionProbs::normalized(z.map(|v| (v - max).exp())).expect("positive weights"));
                frame.human_label = Some(class);
                frame.grayness = Some(0.0);
            }
            frames.push(frame);
        }

        for lead in -1..=c.max_lead {
            let valid_day = d + i64::from(lead);
            if valid_day < -1 {
                continue;
            }
            let error = normal(c.noise_at_lead(lead)).sample(&mut rng);
            for hour in 0..WEATHER_HOURS {
                let valid_at = local_instant(date(valid_day), NaiveTime::from_hms_opt(hour, 0, 0).expect("hour"));
                let mut w =
                    synth_weather(c, &mut rng, &camera_id, valid_at, lead, state(valid_day), error, hour, valid_day);
                for v in crate::model::WeatherVariable::ALL {
                    if rng.random_bool(c.missing_rate) {
                        w.set(v, None);
                    }
                }
                if rng.random_bool(c.missing_rate) {
                    w.weather_code = None;
                }
                weather.push(w);
            }
        }
    }
    (site, frames, weather, gold)
}

#[allow(clippy::too_many_arguments)]
fn synth_weather(
    c: &SynthConfig,
    rng: &mut ChaCha8Rng,
    camera_id: &str,
    valid_at: crate::model::Timestamp,
    lead: i8,
    visible: bool,
    error: f64,
    hour: u32,
    day: i64,
) -> WeatherRecord {
    // Every state-dependent variable reads the same noisy signal, so the
    // record as a whole carries no more information than its error allows.
    let signal = if visible { 1.0 } else { -1.0 } - error / 30.0;
    let jitter = normal(c.hourly_jitter);
    let mut j = || jitter.sample(rng);
    let cloud = (50.0 - 30.0 * signal + j()).clamp(0.0, 100.0);
    let humidity = (65.0 - 15.0 * signal + 2.0 * j()).clamp(5.0, 100.0);
    let surface = 900.0 + 6.0 * signal + 0.3 * j();
    let precip = ((cloud - 75.0) / 8.0 + 0.1 * j()).max(0.0);
    let season = (2.0 * std::f64::consts::PI * day as f64 / 365.0).cos();
    let temp = 2.0 + 8.0 * -season + 0.5 * (f64::from(hour) - 6.0) + 1.5 * signal + 0.5 * j();
    let snow = if temp < 0.0 { precip * 0.8 } else { 0.0 };
    let wind = (4.0 - 1.5 * signal + 0.3 * j()).max(0.0);
    let mut dir = (240.0 + 15.0 * j()).rem_euclid(360.0);
    if dir >= 360.0 {
        dir = 0.0;
    }
    let code = if precip > 0.5 {
        if snow > 0.0 {
            71
        } else {
            61
        }
    } else if cloud < 20.0 {
        0
    } else if cloud < 50.0 {
        1
    } else if cloud < 85.0 {
        2
    } else {
        3
    };
    let round1 = |v: f64| (v * 10.0).round() / 10.0;
    let mut w = WeatherRecord::empty(camera_id, valid_at, lead);
    w.temperature_c = Some(round1(temp));
    w.weather_code = Some(code);
    w.humidity_pct = Some(round1(humidity));
    w.precipitation_mm = Some(round1(precip));
    w.snowfall_mm = Some(round1(snow));
    w.cloud_cover_pct = Some(round1(cloud));
    w.surface_pressure_hpa = Some(round1(surface));
    w.sealevel_pressure_hpa = Some(round1(surface + 113.0));
    w.wind_speed_ms = Some(round1(wind));
    w.wind_dir_deg = Some(round1(dir) % 360.0);
    w
}

/// Writes a small PNG per frame under `<root>/raw/images/<camera>/` and
/// points the frame records at it, so QC can run over synthetic data. Gray
/// frames get an achromatic raster; the rest a sky raster tinted by the
/// frame index so that no two images share a digest.
pub fn write_synth_images(data: &mut SynthData, root: &Path) -> Result<(), EvalError> {
    for (i, frame) in data.frames.iter_mut().enumerate() {
        let gray = frame.qc_status == Some(QcStatus::BadGray);
        let mut img = RgbImage::from_pixel(8, 8, if gray { Rgb([128, 128, 128]) } else { Rgb([70, 130, 200]) });
        let tag = (i as u32).to_le_bytes();
        for (k, b) in tag.iter().enumerate() {
            img.put_pixel(k as u32, 0, if gray { Rgb([*b; 3]) } else { Rgb([0, *b, 200]) });
        }
        let rel = Path::new("raw/images").join(&frame.camera_id).join(drop_file_name(frame.captured_at, "png"));
        let path = root.join(&rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| EvalError::io(dir, e))?;
        }
        let mut bytes = Vec::new();
        img.write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)
            .map_err(|e| EvalError::InvalidInput(format!("png encode: {e}")))?;
        std::fs::write(&path, &bytes).map_err(|e| EvalError::io(&path, e))?;
        frame.image_path = rel.to_string_lossy().into_owned();
        frame.content_digest = Some(hex::encode(Sha256::digest(&bytes)));
    }
    Ok(())
}
