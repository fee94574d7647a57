//! Append-only JSONL storage partitioned by camera and UTC month.
//!
//! Each partition is a data file plus a manifest naming the committed byte
//! length. Readers never look past that length, so a batch that fails half
//! way is invisible, and the next append truncates the torn tail first.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::OpenOptions;
use std::io::{Read, Seek, SeekFrom, Write};
use std::marker::PhantomData;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::model::{format_ts, ts_format, FrameRecord, Timestamp, WeatherRecord};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RecordKey {
    pub camera_id: String,
    #[serde(with = "ts_format")]
    pub timestamp: Timestamp,
    pub lead_days: Option<i8>,
}

pub trait RepoRecord: Serialize + DeserializeOwned + Clone {
    fn key(&self) -> RecordKey;
}

impl RepoRecord for FrameRecord {
    fn key(&self) -> RecordKey {
        RecordKey { camera_id: self.camera_id.clone(), timestamp: self.captured_at, lead_days: None }
    }
}

impl RepoRecord for WeatherRecord {
    fn key(&self) -> RecordKey {
        RecordKey { camera_id: self.camera_id.clone(), timestamp: self.valid_at, lead_days: Some(self.lead_days) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Partition {
    pub camera_id: String,
    /// `YYYY-MM` of the record timestamp in UTC.
    pub month: String,
}

impl Partition {
    pub fn of(key: &RecordKey) -> Self {
        Self { camera_id: key.camera_id.clone(), month: key.timestamp.format("%Y-%m").to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub record_count: u64,
    pub byte_len: u64,
    pub last_key: Option<RecordKey>,
}

impl Default for Manifest {
    fn default() -> Self {
        Self { schema_version: SCHEMA_VERSION, record_count: 0, byte_len: 0, last_key: None }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AppendSummary {
    pub appended: usize,
    pub duplicates: usize,
}

pub struct Repository<R> {
    root: PathBuf,
    _record: PhantomData<fn() -> R>,
}

impl<R: RepoRecord> Repository<R> {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, IngestError> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(|e| IngestError::io(&root, e))?;
        Ok(Self { root, _record: PhantomData })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn data_path(&self, p: &Partition) -> PathBuf {
        self.root.join(&p.camera_id).join(format!("{}.jsonl", p.month))
    }

    fn manifest_path(&self, p: &Partition) -> PathBuf {
        self.root.join(&p.camera_id).join(format!("{}.manifest.json", p.month))
    }

    pub fn manifest(&self, p: &Partition) -> Result<Manifest, IngestError> {
        let path = self.manifest_path(p);
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Manifest::default()),
            Err(e) => return Err(IngestError::io(&path, e)),
        };
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| IngestError::CorruptRecord { path: path.display().to_string(), message: e.to_string() })?;
        if manifest.schema_version != SCHEMA_VERSION {
            return Err(IngestError::SchemaMismatch { expected: SCHEMA_VERSION, found: manifest.schema_version });
        }
        Ok(manifest)
    }

    pub fn partitions(&self) -> Result<Vec<Partition>, IngestError> {
        let mut out = Vec::new();
        let cameras = match std::fs::read_dir(&self.root) {
            Ok(c) => c,
            Err(e) => return Err(IngestError::io(&self.root, e)),
        };
        for camera in cameras {
            let camera = camera.map_err(|e| IngestError::io(&self.root, e))?;
            if !camera.path().is_dir() {
                continue;
            }
            let camera_id = camera.file_name().to_string_lossy().into_owned();
            for entry in std::fs::read_dir(camera.path()).map_err(|e| IngestError::io(&camera.path(), e))? {
                let name = entry.map_err(|e| IngestError::io(&camera.path(), e))?.file_name();
                if let Some(month) = name.to_string_lossy().strip_suffix(".manifest.json") {
                    out.push(Partition { camera_id: camera_id.clone(), month: month.to_string() });
                }
            }
        }
        out.sort();
        Ok(out)
    }

    /// Committed records of one partition, in append order.
    pub fn read_partition(&self, p: &Partition) -> Result<Vec<R>, IngestError> {
        let manifest = self.manifest(p)?;
        if manifest.byte_len == 0 {
            return Ok(Vec::new());
        }
        let path = self.data_path(p);
        let file = std::fs::File::open(&path).map_err(|e| IngestError::io(&path, e))?;
        let mut buf = String::new();
        file.take(manifest.byte_len).read_to_string(&mut buf).map_err(|e| IngestError::io(&path, e))?;
        if buf.len() as u64 != manifest.byte_len {
            return Err(IngestError::CorruptRecord {
                path: path.display().to_string(),
                message: format!("data file shorter than committed length {}", manifest.byte_len),
            });
        }
        buf.lines()
            .enumerate()
            .map(|(i, line)| {
                serde_json::from_str(line).map_err(|e| IngestError::CorruptRecord {
                    path: path.display().to_string(),
                    message: format!("line {}: {e}", i + 1),
                })
            })
            .collect()
    }

    /// Every committed record, ordered by key.
    pub fn read_all(&self) -> Result<Vec<R>, IngestError> {
        let mut all = Vec::new();
        for p in self.partitions()? {
            all.extend(self.read_partition(&p)?);
        }
        all.sort_by_key(|r| r.key());
        Ok(all)
    }

    /// Appends the batch as one unit: either every new record becomes visible
    /// or none does. Records whose key already exists (in storage or earlier
    /// in the batch) are skipped.
    pub fn append(&self, records: &[R]) -> Result<AppendSummary, IngestError> {
        let mut grouped: BTreeMap<Partition, Vec<&R>> = BTreeMap::new();
        for r in records {
            grouped.entry(Partition::of(&r.key())).or_default().push(r);
        }
        let mut summary = AppendSummary::default();
        let mut pending = Vec::new();
        for (partition, batch) in grouped {
            let manifest = self.manifest(&partition)?;
            let mut seen: BTreeSet<RecordKey> = self.read_partition(&partition)?.iter().map(|r| r.key()).collect();
            let mut payload = String::new();
            let mut added = 0u64;
            let mut last_key = manifest.last_key.clone();
            for r in batch {
                let key = r.key();
                if !seen.insert(key.clone()) {
                    summary.duplicates += 1;
                    continue;
                }
                payload.push_str(&serde_json::to_string(r).expect("record serializes"));
                payload.push('\n');
                added += 1;
                if last_key.as_ref().is_none_or(|k| key > *k) {
                    last_key = Some(key);
                }
            }
            if added == 0 {
                continue;
            }
            summary.appended += added as usize;
            let next = Manifest {
                schema_version: SCHEMA_VERSION,
                record_count: manifest.record_count + added,
                byte_len: manifest.byte_len + payload.len() as u64,
                last_key,
            };
            pending.push((partition, manifest, next, payload));
        }

        let mut written = Vec::new();
        for (partition, old, _, payload) in &pending {
            if let Err(e) = self.write_data(partition, old.byte_len, payload) {
                self.rollback_data(&written);
                return Err(e);
            }
            written.push((partition, old.byte_len));
        }
        let mut committed: Vec<(&Partition, _)> = Vec::new();
        for (partition, old, next, _) in &pending {
            if let Err(e) = self.write_manifest(partition, next) {
                for (p, previous) in &committed {
                    let _ = self.write_manifest(p, previous);
                }
                self.rollback_data(&written);
                return Err(e);
            }
            committed.push((partition, old.clone()));
        }
        Ok(summary)
    }

    fn write_data(&self, p: &Partition, committed_len: u64, payload: &str) -> Result<(), IngestError> {
        let path = self.data_path(p);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| IngestError::io(dir, e))?;
        }
        let mut file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .read(true)
            .write(true)
            .open(&path)
            .map_err(|e| IngestError::io(&path, e))?;
        let io = |e| IngestError::io(&path, e);
        file.set_len(committed_len).map_err(io)?;
        file.seek(SeekFrom::Start(committed_len)).map_err(io)?;
        file.write_all(payload.as_bytes()).map_err(io)?;
        file.sync_data().map_err(io)
    }

    fn rollback_data(&self, written: &[(&Partition, u64)]) {
        for (p, len) in written {
            let path = self.data_path(p);
            if let Ok(f) = OpenOptions::new().write(true).open(&path) {
                if let Err(e) = f.set_len(*len) {
                    log::error!("rollback of {} failed: {e}", path.display());
                }
            }
        }
    }

    fn write_manifest(&self, p: &Partition, manifest: &Manifest) -> Result<(), IngestError> {
        let path = self.manifest_path(p);
        let tmp = path.with_extension("json.tmp");
        let body = serde_json::to_string_pretty(manifest).expect("manifest serializes");
        std::fs::write(&tmp, body).map_err(|e| IngestError::io(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| IngestError::io(&path, e))
    }
}

impl std::fmt::Display for RecordKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}@{}", self.camera_id, format_ts(self.timestamp))?;
        if let Some(l) = self.lead_days {
            write!(f, "{l:+}d")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_ts;

    fn weather(cam: &str, ts: &str, lead: i8, temp: f64) -> WeatherRecord {
        let mut w = WeatherRecord::empty(cam, parse_ts(ts).unwrap(), lead);
        w.temperature_c = Some(temp);
        w
    }

    #[test]
    fn append_and_read_back() {
        let dir = tempfile::tempdir().unwrap();
        let repo: Repository<WeatherRecord> = Repository::open(dir.path()).unwrap();
        let batch = vec![
            weather("a", "2025-06-01T04:00:00Z", 0, 10.0),
            weather("a", "2025-06-01T04:00:00Z", 1, 11.0),
            weather("a", "2025-07-01T04:00:00Z", 0, 12.0),
            weather("b", "2025-06-01T04:00:00Z", 0, 13.0),
        ];
        let s = repo.append(&batch).unwrap();
        assert_eq!(s, AppendSummary { appended: 4, duplicates: 0 });
        assert_eq!(repo.partitions().unwrap().len(), 3);
        let all = repo.read_all().unwrap();
        assert_eq!(all.len(), 4);
        let june = Partition { camera_id: "a".into(), month: "2025-06".into() };
        let m = repo.manifest(&june).unwrap();
        assert_eq!(m.record_count, 2);
        assert_eq!(m.last_key.unwrap().lead_days, Some(1));
    }

    #[test]
    fn duplicates_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let repo: Repository<WeatherRecord> = Repository::open(dir.path()).unwrap();
        let w = weather("a", "2025-06-01T04:00:00Z", 0, 10.0);
        repo.append(&[w.clone(), w.clone()]).unwrap();
        let s = repo.append(&[weather("a", "2025-06-01T04:00:00Z", 0, 99.0)]).unwrap();
        assert_eq!(s, AppendSummary { appended: 0, duplicates: 1 });
        let all = repo.read_all().unwrap();
        assert_eq!(all, vec![w]);
    }

    #[test]
    fn failed_batch_leaves_repository_unchanged() {
        let dir = tempfile::tempdir().unwrap();
        let repo: Repository<WeatherRecord> = Repository::open(dir.path()).unwrap();
        repo.append(&[weather("a", "2025-06-01T04:00:00Z", 0, 10.0)]).unwrap();
        let before = repo.read_all().unwrap();
        let data_before = std::fs::read(dir.path().join("a/2025-06.jsonl")).unwrap();
        // a directory where partition b's data file should go makes its write fail
        std::fs::create_dir_all(dir.path().join("b/2025-06.jsonl")).unwrap();
        let err = repo
            .append(&[weather("a", "2025-06-01T04:30:00Z", 0, 11.0), weather("b", "2025-06-01T04:30:00Z", 0, 12.0)]);
        assert!(err.is_err());
        assert_eq!(repo.read_all().unwrap(), before);
        assert_eq!(std::fs::read(dir.path().join("a/2025-06.jsonl")).unwrap(), data_before);
    }

    #[test]
    fn torn_tail_is_ignored_then_overwritten() {
        let dir = tempfile::tempdir().unwrap();
        let repo: Repository<WeatherRecord> = Repository::open(dir.path()).unwrap();
        repo.append(&[weather("a", "2025-06-01T04:00:00Z", 0, 10.0)]).unwrap();
        let mut f = OpenOptions::new().append(true).open(dir.path().join("a/2025-06.jsonl")).unwrap();
        f.write_all(b"{\"camera_id\":\"a\",\"vali").unwrap();
        assert_eq!(repo.read_all().unwrap().len(), 1);
        repo.append(&[weather("a", "2025-06-01T05:00:00Z", 0, 11.0)]).unwrap();
        assert_eq!(repo.read_all().unwrap().len(), 2);
    }

    #[test]
    fn schema_version_mismatch_is_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let repo: Repository<WeatherRecord> = Repository::open(dir.path()).unwrap();
        repo.append(&[weather("a", "2025-06-01T04:00:00Z", 0, 10.0)]).unwrap();
        let path = dir.path().join("a/2025-06.manifest.json");
        let text = std::fs::read_to_string(&path).unwrap().replace("\"schema_version\": 1", "\"schema_version\": 2");
        std::fs::write(&path, text).unwrap();
        assert!(matches!(repo.read_all(), Err(IngestError::SchemaMismatch { expected: 1, found: 2 })));
    }
}
