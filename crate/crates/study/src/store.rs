//! Append-only event log with periodic snapshots.
//!
//! `log.jsonl` holds one event per line and is never rewritten, except that a
//! torn final line (no trailing newline) left by a crash is cut off on open.
//! `snapshot.json` stores the full state plus the log offset it covers and is
//! replaced atomically via rename.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use atfqoe_core::records::{Session, SessionStatus, VoteRecord};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogEvent {
    Session(Session),
    Vote(VoteRecord),
    Status { session_id: String, status: SessionStatus, at: u64 },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub log_offset: u64,
    pub sessions: Vec<Session>,
    pub votes: Vec<VoteRecord>,
    /// Last activity per session, parallel to `sessions`.
    pub last_activity: Vec<u64>,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line} (byte offset {offset}): {source}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        offset: u64,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    BadSnapshot {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

const LOG: &str = "log.jsonl";
const SNAPSHOT: &str = "snapshot.json";

pub struct Store {
    dir: PathBuf,
    log: File,
    offset: u64,
    since_snapshot: usize,
    snapshot_every: usize,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

impl Store {
    /// Opens (or creates) a store and returns the latest snapshot together
    /// with the events logged after it.
    pub fn open(dir: &Path, snapshot_every: usize) -> Result<(Store, Snapshot, Vec<LogEvent>), StoreError> {
        fs::create_dir_all(dir).map_err(io(dir))?;
        let snap_path = dir.join(SNAPSHOT);
        let snapshot = match fs::read(&snap_path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map_err(|source| StoreError::BadSnapshot { path: snap_path.clone(), source })?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Snapshot::default(),
            Err(e) => return Err(io(&snap_path)(e)),
        };

        let log_path = dir.join(LOG);
        let mut log = OpenOptions::new().read(true).append(true).create(true).open(&log_path).map_err(io(&log_path))?;
        let len = log.metadata().map_err(io(&log_path))?.len();
        let start = snapshot.log_offset.min(len);
        log.seek(SeekFrom::Start(start)).map_err(io(&log_path))?;

        let mut events = Vec::new();
        let mut reader = BufReader::new(&log);
        let mut offset = start;
        let mut line_no = 0;
        let mut buf = String::new();
        loop {
            buf.clear();
            let n = reader.read_line(&mut buf).map_err(io(&log_path))?;
            if n == 0 {
                break;
            }
            line_no += 1;
            if !buf.ends_with('\n') {
                // torn write at the tail
                log.set_len(offset).map_err(io(&log_path))?;
                break;
            }
            if !buf.trim().is_empty() {
                let event = serde_json::from_str(&buf).map_err(|source| StoreError::Corrupt {
                    path: log_path.clone(),
                    line: line_no,
                    offset,
                    source,
                })?;
                events.push(event);
            }
            offset += n as u64;
        }

        let store = Store {
            dir: dir.to_path_buf(),
            log,
            offset,
            since_snapshot: events.len(),
            snapshot_every: snapshot_every.max(1),
        };
        Ok((store, snapshot, events))
    }

    /// Writes one event as a single line and syncs it before returning.
    pub fn append(&mut self, event: &LogEvent) -> Result<(), StoreError> {
        let path = self.dir.join(LOG);
        let mut line = serde_json::to_vec(event).expect("log events serialize");
        line.push(b'\n');
        self.log.write_all(&line).map_err(io(&path))?;
        self.log.sync_data().map_err(io(&path))?;
        self.offset += line.len() as u64;
        self.since_snapshot += 1;
        Ok(())
    }

    pub fn snapshot_due(&self) -> bool {
        self.since_snapshot >= self.snapshot_every
    }

    pub fn write_snapshot(&mut self, mut snapshot: Snapshot) -> Result<(), StoreError> {
        snapshot.log_offset = self.offset;
        let path = self.dir.join(SNAPSHOT);
        let tmp = self.dir.join("snapshot.json.tmp");
        let bytes = serde_json::to_vec(&snapshot).expect("snapshot serializes");
        let mut f = File::create(&tmp).map_err(io(&tmp))?;
        f.write_all(&bytes).map_err(io(&tmp))?;
        f.sync_all().map_err(io(&tmp))?;
        fs::rename(&tmp, &path).map_err(io(&path))?;
        self.since_snapshot = 0;
        Ok(())
    }
}
