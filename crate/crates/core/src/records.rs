//! Session and vote records shared by the study service and offline
//! analysis, plus the line-delimited JSON export that connects them.
//!
//! Each export line is one object tagged by `"type"`:
//!
//! ```text
//! {"type":"session","session_id":"..","set_id":"..","presentation_order":[..],"created_at":..,"status":"complete_valid"}
//! {"type":"vote","session_id":"..","pair_id":"..","choice":"left","ttc_ms":..,"replay_count":0,"received_at":..}
//! ```

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::choice::Choice;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    InProgress,
    CompleteValid,
    CompleteInvalid,
    Abandoned,
}

impl SessionStatus {
    pub fn is_final(self) -> bool {
        self != SessionStatus::InProgress
    }
}

/// One participant attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub set_id: String,
    pub presentation_order: Vec<String>,
    /// Unix milliseconds.
    pub created_at: u64,
    pub status: SessionStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteRecord {
    pub session_id: String,
    pub pair_id: String,
    pub choice: Choice,
    /// From the first playback start of the pair to the choice click.
    pub ttc_ms: f64,
    pub replay_count: u32,
    /// Unix milliseconds.
    pub received_at: u64,
    /// Set when `ttc_ms` exceeds ten times the pair's slower visual complete.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub ttc_outlier: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChoiceCounts {
    pub left: u32,
    pub right: u32,
    pub equal: u32,
}

impl ChoiceCounts {
    pub fn add(&mut self, choice: Choice) {
        *self.get_mut(choice) += 1;
    }

    pub fn get(&self, choice: Choice) -> u32 {
        match choice {
            Choice::Left => self.left,
            Choice::Right => self.right,
            Choice::Equal => self.equal,
        }
    }

    fn get_mut(&mut self, choice: Choice) -> &mut u32 {
        match choice {
            Choice::Left => &mut self.left,
            Choice::Right => &mut self.right,
            Choice::Equal => &mut self.equal,
        }
    }

    pub fn total(&self) -> u32 {
        self.left + self.right + self.equal
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteTally {
    pub pair_id: String,
    pub counts: ChoiceCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ExportLine {
    Session(Session),
    Vote(VoteRecord),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VoteExport {
    pub sessions: Vec<Session>,
    pub votes: Vec<VoteRecord>,
}

#[derive(Debug, thiserror::Error)]
pub enum RecordError {
    #[error("line {line} (byte offset {offset}): {source}")]
    Parse {
        line: usize,
        offset: u64,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl VoteExport {
    /// Sessions first, then votes, each in stored order.
    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for s in &self.sessions {
            write_line(&mut out, &ExportLine::Session(s.clone()))?;
        }
        for v in &self.votes {
            write_line(&mut out, &ExportLine::Vote(v.clone()))?;
        }
        out.flush()
    }

    pub fn read_from<R: BufRead>(reader: R) -> Result<Self, RecordError> {
        let mut export = VoteExport::default();
        for item in read_lines(reader) {
            match item? {
                ExportLine::Session(s) => export.sessions.push(s),
                ExportLine::Vote(v) => export.votes.push(v),
            }
        }
        Ok(export)
    }

    pub fn valid_session_ids(&self) -> HashSet<&str> {
        self.sessions
            .iter()
            .filter(|s| s.status == SessionStatus::CompleteValid)
            .map(|s| s.session_id.as_str())
            .collect()
    }

    /// Votes cast in sessions that finished valid.
    pub fn valid_votes(&self) -> impl Iterator<Item = &VoteRecord> {
        let valid = self.valid_session_ids();
        self.votes.iter().filter(move |v| valid.contains(v.session_id.as_str()))
    }

    /// Per-pair counts over valid sessions, sorted by pair id.
    pub fn tally(&self) -> Vec<VoteTally> {
        let mut by_pair: BTreeMap<&str, ChoiceCounts> = BTreeMap::new();
        for v in self.valid_votes() {
            by_pair.entry(v.pair_id.as_str()).or_default().add(v.choice);
        }
        by_pair.into_iter().map(|(pair_id, counts)| VoteTally { pair_id: pair_id.to_string(), counts }).collect()
    }
}

pub fn write_line<W: Write>(out: &mut W, line: &ExportLine) -> std::io::Result<()> {
    serde_json::to_writer(&mut *out, line)?;
    out.write_all(b"\n")
}

/// Parses line-delimited records, reporting the byte offset of a bad line.
pub fn read_lines<R: BufRead>(mut reader: R) -> impl Iterator<Item = Result<ExportLine, RecordError>> {
    let mut offset = 0u64;
    let mut line_no = 0usize;
    let mut buf = String::new();
    std::iter::from_fn(move || loop {
        buf.clear();
        let n = match reader.read_line(&mut buf) {
            Ok(0) => return None,
            Ok(n) => n,
            Err(e) => return Some(Err(RecordError::Io(e))),
        };
        line_no += 1;
        let start = offset;
        offset += n as u64;
        let text = buf.trim();
        if text.is_empty() {
            continue;
        }
        return Some(serde_json::from_str(text).map_err(|source| RecordError::Parse {
            line: line_no,
            offset: start,
            source,
        }));
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn session(id: &str, status: SessionStatus) -> Session {
        Session {
            session_id: id.into(),
            set_id: "set-01".into(),
            presentation_order: vec!["p".into(), "q".into()],
            created_at: 1,
            status,
        }
    }

    fn vote(session: &str, pair: &str, choice: Choice) -> VoteRecord {
        VoteRecord {
            session_id: session.into(),
            pair_id: pair.into(),
            choice,
            ttc_ms: 1234.5,
            replay_count: 1,
            received_at: 99,
            ttc_outlier: false,
        }
    }

    #[test]
    fn export_round_trip_and_empty() {
        let export = VoteExport {
            sessions: vec![session("a", SessionStatus::CompleteValid), session("b", SessionStatus::Abandoned)],
            votes: vec![
                vote("a", "p", Choice::Left),
                VoteRecord { ttc_outlier: true, ..vote("b", "q", Choice::Equal) },
            ],
        };
        let mut buf = Vec::new();
        export.write_to(&mut buf).unwrap();
        assert_eq!(VoteExport::read_from(buf.as_slice()).unwrap(), export);

        let mut empty = Vec::new();
        VoteExport::default().write_to(&mut empty).unwrap();
        assert!(empty.is_empty());
        assert_eq!(VoteExport::read_from(empty.as_slice()).unwrap(), VoteExport::default());
    }

    #[test]
    fn malformed_line_reports_offset() {
        let good = serde_json::to_string(&ExportLine::Vote(vote("a", "p", Choice::Right))).unwrap();
        let text = format!("{good}\n{{\"type\":\"vote\",\"oops\n");
        match VoteExport::read_from(text.as_bytes()) {
            Err(RecordError::Parse { line: 2, offset, .. }) => assert_eq!(offset, good.len() as u64 + 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn tally_counts_valid_sessions_only() {
        let export = VoteExport {
            sessions: vec![
                session("s1", SessionStatus::CompleteValid),
                session("s2", SessionStatus::CompleteValid),
                session("s3", SessionStatus::CompleteValid),
                session("bad", SessionStatus::CompleteInvalid),
            ],
            votes: vec![
                vote("s1", "p", Choice::Left),
                vote("s2", "p", Choice::Left),
                vote("s3", "p", Choice::Right),
                vote("bad", "p", Choice::Equal),
                vote("bad", "z", Choice::Equal),
            ],
        };
        let t = export.tally();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].counts, ChoiceCounts { left: 2, right: 1, equal: 0 });
        assert!(VoteExport { sessions: vec![], votes: export.votes.clone() }.tally().is_empty());
    }
}
