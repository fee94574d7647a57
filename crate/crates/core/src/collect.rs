//! Replays scheduler ticks over a time range: frame jobs pick up images from
//! a drop directory, weather jobs fetch through a [`WeatherSource`]. Every job
//! outcome lands in the uptime log.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Duration as StdDuration;

use chrono::Duration;
use log::{info, warn};

use crate::ingest::{
    fetch_weather_with_retry, ingest_frame, scan_drop_dir, schedule_tick, DroppedFrame, JobKind, JobOutcome, JobStatus,
    RetryPolicy, UptimeLog, WeatherQuery, WeatherSource,
};
use crate::model::{floor_to_grid, CameraSite, FrameRecord, Timestamp, GRID_MINUTES};
use crate::store::{DataRoot, StoreError};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CollectSummary {
    pub ticks: usize,
    pub frames_appended: usize,
    pub weather_appended: usize,
    pub duplicates: usize,
    pub failed_jobs: usize,
    pub missing_frames: usize,
}

pub struct CollectRun<'a> {
    pub sites: &'a [CameraSite],
    pub from: Timestamp,
    pub to: Timestamp,
    /// `<drop>/<camera>/<YYYYMMDDTHHMMZ>.<ext>`; frame jobs are skipped when absent.
    pub drop_dir: Option<&'a Path>,
    pub source: &'a dyn WeatherSource,
    pub policy: RetryPolicy,
    /// Wall-clock now, for plausibility checks on capture times.
    pub now: Timestamp,
}

/// Runs every tick in `[from, to]` on the 30-minute grid.
pub fn run_collect(
    root: &DataRoot,
    run: &CollectRun<'_>,
    sleep: &mut dyn FnMut(StdDuration),
) -> Result<CollectSummary, StoreError> {
    root.ensure_layout()?;
    let frames_repo = root.frames()?;
    let weather_repo = root.weather()?;
    let uptime = UptimeLog::new(root.uptime_log_path());
    let dropped: HashMap<(String, Timestamp), DroppedFrame> = match run.drop_dir {
        Some(d) => scan_drop_dir(d)?.into_iter().map(|f| ((f.camera_id.clone(), f.captured_at), f)).collect(),
        None => HashMap::new(),
    };
    let sites: HashMap<&str, &CameraSite> = run.sites.iter().map(|s| (s.camera_id.as_str(), s)).collect();

    let mut summary = CollectSummary::default();
    let mut tick = floor_to_grid(run.from);
    while tick <= run.to {
        summary.ticks += 1;
        for job in schedule_tick(tick, run.sites) {
            let site = sites[job.camera_id.as_str()];
            let started = std::time::Instant::now();
            let outcome = match job.kind {
                JobKind::Frame => {
                    if run.drop_dir.is_none() {
                        continue;
                    }
                    match dropped.get(&(job.camera_id.clone(), job.due_at)) {
                        None => {
                            summary.missing_frames += 1;
                            JobOutcome {
                                job,
                                status: JobStatus::Failed,
                                attempts: 1,
                                latency_ms: 0,
                                records: 0,
                                message: Some("no image in drop directory".into()),
                            }
                        }
                        Some(d) => {
                            let record = store_frame(root, d, run.now)?;
                            let s = frames_repo.append(std::slice::from_ref(&record))?;
                            summary.frames_appended += s.appended;
                            summary.duplicates += s.duplicates;
                            JobOutcome {
                                job,
                                status: JobStatus::Success,
                                attempts: 1,
                                latency_ms: started.elapsed().as_millis() as u64,
                                records: s.appended,
                                message: None,
                            }
                        }
                    }
                }
                JobKind::Weather => {
                    let query = WeatherQuery::for_site(site);
                    let attempt = fetch_weather_with_retry(site, &query, job.due_at, run.source, &run.policy, sleep);
                    let latency_ms = attempt.latency.as_millis() as u64;
                    match attempt.result {
                        Ok(records) => {
                            let s = weather_repo.append(&records)?;
                            summary.weather_appended += s.appended;
                            summary.duplicates += s.duplicates;
                            JobOutcome {
                                job,
                                status: JobStatus::Success,
                                attempts: attempt.attempts,
                                latency_ms,
                                records: s.appended,
                                message: None,
                            }
                        }
                        Err(e) => {
                            warn!("{} weather at {}: {e}", job.camera_id, job.due_at);
                            summary.failed_jobs += 1;
                            let status = if e.is_retryable() { JobStatus::Retry } else { JobStatus::Failed };
                            JobOutcome {
                                job,
                                status,
                                attempts: attempt.attempts,
                                latency_ms,
                                records: 0,
                                message: Some(e.to_string()),
                            }
                        }
                    }
                }
            };
            uptime.record(&outcome)?;
        }
        tick += Duration::minutes(GRID_MINUTES);
    }
    info!(
        "collect: {} ticks, {} frames, {} weather records, {} failed weather jobs",
        summary.ticks, summary.frames_appended, summary.weather_appended, summary.failed_jobs
    );
    Ok(summary)
}

/// Copies a dropped image under `raw/images/` and builds its record with a
/// root-relative path.
fn store_frame(root: &DataRoot, d: &DroppedFrame, now: Timestamp) -> Result<FrameRecord, StoreError> {
    let name = d.path.file_name().map(PathBuf::from).unwrap_or_default();
    let rel = Path::new("raw/images").join(&d.camera_id).join(name);
    let dest = root.path().join(&rel);
    if let Some(dir) = dest.parent() {
        std::fs::create_dir_all(dir).map_err(|e| StoreError::Io { path: dir.display().to_string(), source: e })?;
    }
    if let Err(e) = std::fs::copy(&d.path, &dest) {
        warn!("{}: copy failed: {e}", d.path.display());
    }
    let mut record = ingest_frame(&dest, &d.camera_id, d.captured_at, now)?;
    record.image_path = rel.to_string_lossy().into_owned();
    Ok(record)
}
