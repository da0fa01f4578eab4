use std::collections::HashMap;

use atfqoe_core::pairing::{PairSet, VideoPair, HONEYPOTS_PER_SET};
use atfqoe_core::records::{Session, SessionStatus, VoteExport, VoteRecord, VoteTally};
use atfqoe_core::Choice;
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::store::{LogEvent, Snapshot, Store, StoreError};

pub const DEFAULT_SESSION_TIMEOUT_MS: u64 = 60 * 60 * 1000;
pub const TTC_OUTLIER_FACTOR: f64 = 10.0;
pub const MIN_HONEYPOTS_CORRECT: usize = 4;

#[derive(Debug, thiserror::Error)]
pub enum StudyError {
    #[error("no pair sets loaded")]
    NoPairSets,
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("pair {pair_id} is not part of session {session_id}")]
    UnknownPair { session_id: String, pair_id: String },
    #[error("pair {0} already has a vote in this session")]
    Duplicate(String),
    #[error("pair {got} voted out of order; next unanswered pair is {expected}")]
    OutOfOrder { expected: String, got: String },
    #[error("session {session_id} is {status:?}")]
    Closed { session_id: String, status: SessionStatus },
    #[error("ttc_ms must be a finite non-negative number, got {0}")]
    InvalidTtc(f64),
    #[error("inconsistent catalog: {0}")]
    Catalog(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Final status for a session with `votes` of 21 pairs answered and
/// `honeypots_correct` of 5 honeypots answered correctly.
pub fn session_outcome(votes: usize, total: usize, honeypots_correct: usize) -> SessionStatus {
    if votes < total {
        SessionStatus::Abandoned
    } else if honeypots_correct >= MIN_HONEYPOTS_CORRECT {
        SessionStatus::CompleteValid
    } else {
        SessionStatus::CompleteInvalid
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoteAck {
    pub position: usize,
    pub remaining: usize,
    pub ttc_outlier: bool,
}

struct SessionState {
    session: Session,
    votes: Vec<usize>,
    last_activity: u64,
}

/// Study state: loaded pair sets, sessions and their votes. All operations
/// take the current time so behavior is reproducible in tests.
pub struct Study {
    sets: Vec<PairSet>,
    pairs: HashMap<String, VideoPair>,
    sessions: Vec<SessionState>,
    by_id: HashMap<String, usize>,
    votes: Vec<VoteRecord>,
    seed: u64,
    timeout_ms: u64,
    store: Option<Store>,
}

impl Study {
    pub fn new(sets: Vec<PairSet>, seed: u64, timeout_ms: u64) -> Result<Self, StudyError> {
        let mut pairs = HashMap::new();
        for set in &sets {
            set.validate().map_err(|e| StudyError::Catalog(e.to_string()))?;
            for p in set.pairs() {
                pairs.insert(p.pair_id.clone(), p.clone());
            }
        }
        Ok(Study {
            sets,
            pairs,
            sessions: Vec::new(),
            by_id: HashMap::new(),
            votes: Vec::new(),
            seed,
            timeout_ms,
            store: None,
        })
    }

    /// Restores state from `store` and logs all further changes to it.
    pub fn with_store(mut self, store: Store, snapshot: Snapshot, events: Vec<LogEvent>) -> Result<Self, StudyError> {
        for (i, s) in snapshot.sessions.into_iter().enumerate() {
            let last = snapshot.last_activity.get(i).copied().unwrap_or(s.created_at);
            self.insert_session(s, last);
        }
        for v in snapshot.votes {
            self.insert_vote(v)?;
        }
        for e in events {
            self.apply(e)?;
        }
        self.store = Some(store);
        Ok(self)
    }

    pub fn pair(&self, pair_id: &str) -> Option<&VideoPair> {
        self.pairs.get(pair_id)
    }

    pub fn session(&self, session_id: &str) -> Option<&Session> {
        self.by_id.get(session_id).map(|&i| &self.sessions[i].session)
    }

    pub fn sessions(&self) -> impl Iterator<Item = &Session> {
        self.sessions.iter().map(|s| &s.session)
    }

    fn insert_session(&mut self, session: Session, last_activity: u64) {
        self.by_id.insert(session.session_id.clone(), self.sessions.len());
        self.sessions.push(SessionState { session, votes: Vec::new(), last_activity });
    }

    fn insert_vote(&mut self, vote: VoteRecord) -> Result<(), StudyError> {
        let &i = self.by_id.get(&vote.session_id).ok_or_else(|| StudyError::UnknownSession(vote.session_id.clone()))?;
        self.sessions[i].votes.push(self.votes.len());
        self.sessions[i].last_activity = self.sessions[i].last_activity.max(vote.received_at);
        self.votes.push(vote);
        Ok(())
    }

    fn apply(&mut self, event: LogEvent) -> Result<(), StudyError> {
        match event {
            LogEvent::Session(s) => {
                let at = s.created_at;
                self.insert_session(s, at);
            }
            LogEvent::Vote(v) => self.insert_vote(v)?,
            LogEvent::Status { session_id, status, .. } => {
                let &i = self.by_id.get(&session_id).ok_or(StudyError::UnknownSession(session_id))?;
                self.sessions[i].session.status = status;
            }
        }
        Ok(())
    }

    /// Persists `event` (when a store is attached) and then applies it.
    fn commit(&mut self, event: LogEvent) -> Result<(), StudyError> {
        if let Some(store) = &mut self.store {
            store.append(&event)?;
        }
        self.apply(event)?;
        if self.store.as_ref().is_some_and(Store::snapshot_due) {
            let snapshot = self.snapshot();
            self.store.as_mut().expect("store present").write_snapshot(snapshot)?;
        }
        Ok(())
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            log_offset: 0,
            sessions: self.sessions.iter().map(|s| s.session.clone()).collect(),
            votes: self.votes.clone(),
            last_activity: self.sessions.iter().map(|s| s.last_activity).collect(),
        }
    }

    /// Starts a session on a uniformly chosen set. The set's assessment
    /// pairs are shuffled and its honeypots placed at uniformly random
    /// positions. Session `n` draws from stream `n` of the study seed.
    pub fn create_session(&mut self, now_ms: u64) -> Result<Session, StudyError> {
        if self.sets.is_empty() {
            return Err(StudyError::NoPairSets);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.sessions.len() as u64);
        let set = &self.sets[rng.random_range(0..self.sets.len())];

        let mut assessment: Vec<&str> = set.assessment_pairs.iter().map(|p| p.pair_id.as_str()).collect();
        assessment.shuffle(&mut rng);
        let mut honeypots: Vec<&str> = set.honeypots.iter().map(|p| p.pair_id.as_str()).collect();
        honeypots.shuffle(&mut rng);
        let total = assessment.len() + honeypots.len();
        let mut slots = index::sample(&mut rng, total, honeypots.len()).into_vec();
        slots.sort_unstable();

        let mut order = Vec::with_capacity(total);
        let (mut a, mut h) = (assessment.into_iter(), honeypots.into_iter());
        for pos in 0..total {
            let next = if slots.binary_search(&pos).is_ok() { h.next() } else { a.next() };
            order.push(next.expect("slot counts match").to_string());
        }

        let mut session_id = format!("{:016x}", rng.random::<u64>());
        while self.by_id.contains_key(&session_id) {
            session_id = format!("{:016x}", rng.random::<u64>());
        }
        let session = Session {
            session_id,
            set_id: set.set_id.clone(),
            presentation_order: order,
            created_at: now_ms,
            status: SessionStatus::InProgress,
        };
        self.commit(LogEvent::Session(session.clone()))?;
        Ok(session)
    }

    fn open_session(&mut self, session_id: &str, now_ms: u64) -> Result<usize, StudyError> {
        let &i = self.by_id.get(session_id).ok_or_else(|| StudyError::UnknownSession(session_id.to_string()))?;
        self.expire(i, now_ms)?;
        Ok(i)
    }

    fn expire(&mut self, i: usize, now_ms: u64) -> Result<(), StudyError> {
        let s = &self.sessions[i];
        if s.session.status == SessionStatus::InProgress && now_ms.saturating_sub(s.last_activity) > self.timeout_ms {
            let session_id = s.session.session_id.clone();
            self.commit(LogEvent::Status { session_id, status: SessionStatus::Abandoned, at: now_ms })?;
        }
        Ok(())
    }

    /// Marks every idle in-progress session abandoned.
    pub fn expire_idle(&mut self, now_ms: u64) -> Result<usize, StudyError> {
        let mut n = 0;
        for i in 0..self.sessions.len() {
            let before = self.sessions[i].session.status;
            self.expire(i, now_ms)?;
            if self.sessions[i].session.status != before {
                n += 1;
            }
        }
        Ok(n)
    }

    pub fn record_vote(
        &mut self,
        session_id: &str,
        pair_id: &str,
        choice: Choice,
        ttc_ms: f64,
        replay_count: u32,
        now_ms: u64,
    ) -> Result<VoteAck, StudyError> {
        let i = self.open_session(session_id, now_ms)?;
        let state = &self.sessions[i];
        if state.session.status != SessionStatus::InProgress {
            return Err(StudyError::Closed { session_id: session_id.to_string(), status: state.session.status });
        }
        let order = &state.session.presentation_order;
        let Some(position) = order.iter().position(|p| p == pair_id) else {
            return Err(StudyError::UnknownPair { session_id: session_id.to_string(), pair_id: pair_id.to_string() });
        };
        let answered = state.votes.len();
        if position < answered {
            return Err(StudyError::Duplicate(pair_id.to_string()));
        }
        if position > answered {
            return Err(StudyError::OutOfOrder { expected: order[answered].clone(), got: pair_id.to_string() });
        }
        if !ttc_ms.is_finite() || ttc_ms < 0.0 {
            return Err(StudyError::InvalidTtc(ttc_ms));
        }
        let remaining = order.len() - answered - 1;
        let max_vc = self.pairs[pair_id].max_visual_complete();
        let ttc_outlier = ttc_ms > TTC_OUTLIER_FACTOR * max_vc;
        self.commit(LogEvent::Vote(VoteRecord {
            session_id: session_id.to_string(),
            pair_id: pair_id.to_string(),
            choice,
            ttc_ms,
            replay_count,
            received_at: now_ms,
            ttc_outlier,
        }))?;
        Ok(VoteAck { position, remaining, ttc_outlier })
    }

    pub fn honeypots_correct(&self, session_id: &str) -> Result<usize, StudyError> {
        let &i = self.by_id.get(session_id).ok_or_else(|| StudyError::UnknownSession(session_id.to_string()))?;
        Ok(self.sessions[i]
            .votes
            .iter()
            .map(|&v| &self.votes[v])
            .filter(|v| self.pairs.get(&v.pair_id).and_then(|p| p.honeypot_answer) == Some(v.choice))
            .count())
    }

    /// Closes the session. Finalizing an already closed session returns its
    /// status unchanged.
    pub fn finalize_session(&mut self, session_id: &str, now_ms: u64) -> Result<SessionStatus, StudyError> {
        let i = self.open_session(session_id, now_ms)?;
        let s = &self.sessions[i];
        if s.session.status.is_final() {
            return Ok(s.session.status);
        }
        let expected = s.session.presentation_order.len();
        let honeypots = s.session.presentation_order.iter().filter(|p| self.pairs[*p].honeypot).count();
        debug_assert_eq!(honeypots, HONEYPOTS_PER_SET);
        let status = session_outcome(s.votes.len(), expected, self.honeypots_correct(session_id)?);
        self.commit(LogEvent::Status { session_id: session_id.to_string(), status, at: now_ms })?;
        Ok(status)
    }

    /// Sessions in creation order followed by votes in arrival order.
    pub fn export(&self) -> VoteExport {
        VoteExport { sessions: self.sessions.iter().map(|s| s.session.clone()).collect(), votes: self.votes.clone() }
    }

    pub fn tally_votes(&self) -> Vec<VoteTally> {
        self.export().tally()
    }
}
