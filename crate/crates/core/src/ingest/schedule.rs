use std::io::Write;
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::model::{floor_to_grid, ts_format, CameraSite, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum JobKind {
    Frame,
    Weather,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FetchJob {
    pub camera_id: String,
    #[serde(with = "ts_format")]
    pub due_at: Timestamp,
    pub kind: JobKind,
}

/// One FRAME and one WEATHER job per valid site, due at `now` floored to the
/// 30-minute grid. Invalid sites are skipped.
pub fn schedule_tick(now: Timestamp, sites: &[CameraSite]) -> Vec<FetchJob> {
    let due_at = floor_to_grid(now);
    let mut jobs = Vec::with_capacity(sites.len() * 2);
    for site in sites {
        if let Err(e) = site.validate() {
            warn!("skipping site: {e}");
            continue;
        }
        for kind in [JobKind::Frame, JobKind::Weather] {
            jobs.push(FetchJob { camera_id: site.camera_id.clone(), due_at, kind });
        }
    }
    jobs
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum JobStatus {
    Success,
    Retry,
    Failed,
}

/// Uptime/latency log entry for one job attempt sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobOutcome {
    #[serde(flatten)]
    pub job: FetchJob,
    pub status: JobStatus,
    pub attempts: u32,
    pub latency_ms: u64,
    pub records: usize,
    pub message: Option<String>,
}

pub struct UptimeLog {
    path: PathBuf,
}

impl UptimeLog {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn record(&self, outcome: &JobOutcome) -> Result<(), IngestError> {
        if let Some(dir) = self.path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| IngestError::io(dir, e))?;
        }
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| IngestError::io(&self.path, e))?;
        let line = serde_json::to_string(outcome).expect("outcome serializes");
        writeln!(f, "{line}").map_err(|e| IngestError::io(&self.path, e))
    }

    pub fn read(&self) -> Result<Vec<JobOutcome>, IngestError> {
        let text = match std::fs::read_to_string(&self.path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(IngestError::io(&self.path, e)),
        };
        text.lines()
            .map(|l| {
                serde_json::from_str(l).map_err(|e| IngestError::CorruptRecord {
                    path: self.path.display().to_string(),
                    message: e.to_string(),
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_ts;

    fn site(id: &str) -> CameraSite {
        CameraSite { camera_id: id.into(), latitude: 35.36, longitude: 138.73, display_name: id.into() }
    }

    #[test]
    fn floors_to_grid() {
        let jobs = schedule_tick(parse_ts("2025-06-01T04:17:00Z").unwrap(), &[site("a")]);
        assert_eq!(jobs.len(), 2);
        assert!(jobs.iter().all(|j| j.due_at == parse_ts("2025-06-01T04:00:00Z").unwrap()));
        assert_eq!(jobs[0].kind, JobKind::Frame);
        assert_eq!(jobs[1].kind, JobKind::Weather);
    }

    #[test]
    fn forty_two_sites_make_eighty_four_jobs() {
        let sites: Vec<_> = (0..42).map(|i| site(&format!("cam-{i:02}"))).collect();
        let now = parse_ts("2025-06-01T04:30:00Z").unwrap();
        let jobs = schedule_tick(now, &sites);
        assert_eq!(jobs.len(), 84);
        assert!(jobs.iter().all(|j| j.due_at == now));
    }

    #[test]
    fn idempotent_within_slot() {
        let sites = [site("a"), site("b")];
        let a = schedule_tick(parse_ts("2025-06-01T04:31:00Z").unwrap(), &sites);
        let b = schedule_tick(parse_ts("2025-06-01T04:59:59Z").unwrap(), &sites);
        assert_eq!(a, b);
    }

    #[test]
    fn empty_and_malformed_sites() {
        let now = parse_ts("2025-06-01T04:00:00Z").unwrap();
        assert!(schedule_tick(now, &[]).is_empty());
        let mut bad = site("x");
        bad.latitude = 123.0;
        assert_eq!(schedule_tick(now, &[bad, site("ok")]).len(), 2);
    }

    #[test]
    fn uptime_log_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let log = UptimeLog::new(dir.path().join("logs/uptime.jsonl"));
        let job = FetchJob {
            camera_id: "a".into(),
            due_at: parse_ts("2025-06-01T04:00:00Z").unwrap(),
            kind: JobKind::Weather,
        };
        let outcome = JobOutcome {
            job,
            status: JobStatus::Failed,
            attempts: 3,
            latency_ms: 12,
            records: 0,
            message: Some("timeout".into()),
        };
        log.record(&outcome).unwrap();
        log.record(&outcome).unwrap();
        assert_eq!(log.read().unwrap(), vec![outcome.clone(), outcome]);
    }
}
