//! A/B pair selection into SI x PSI difference conditions.
//!
//! A pair is eligible when the two visual-complete times are within 5%
//! normalized difference. The SI and PSI differences are then sorted into
//! four bands each, giving 16 condition buckets:
//!
//! | band          | interval       |
//! |---------------|----------------|
//! | `ge10`        | d >= 10        |
//! | `1to10`       | 1 <= d < 10    |
//! | `-10to-1`     | -10 < d <= -1  |
//! | `le-10`       | d <= -10       |
//!
//! Differences in (-1, 1) fall between bands and the pair is skipped. By
//! default `d` is the normalized difference in percent; [`BandUnits::Absolute`]
//! reads the cutoffs as multiples of 100 ms instead.

use std::collections::HashSet;
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::choice::Choice;
use crate::indices::{percent_diff, IndexError, MetricReport};

pub const VC_GATE_PERCENT: f64 = 5.0;
pub const HONEYPOT_VC_RATIO: f64 = 3.0;
pub const ASSESSMENT_PAIRS_PER_SET: usize = 16;
pub const HONEYPOTS_PER_SET: usize = 5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PairingError {
    #[error("metric error: {0}")]
    Metric(#[from] IndexError),
    #[error("pair {0:?}: left and right are the same page load")]
    SamePage(String),
    #[error("pair {0:?}: honeypot flag and honeypot answer disagree")]
    HoneypotAnswer(String),
    #[error("pair {pair_id:?} is not an obvious honeypot: visual complete {left_vc} vs {right_vc} ms")]
    NotObvious { pair_id: String, left_vc: f64, right_vc: f64 },
    #[error("expected exactly {HONEYPOTS_PER_SET} honeypots, got {0}")]
    HoneypotCount(usize),
    #[error("bucket {bucket} has {depth} pairs, {needed} needed")]
    ShallowBucket { bucket: ConditionBucket, depth: usize, needed: usize },
    #[error("duplicate pair id {0:?}")]
    DuplicatePair(String),
    #[error("invalid catalog: {0}")]
    Catalog(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Band {
    #[serde(rename = "ge10")]
    AtLeast10,
    #[serde(rename = "1to10")]
    OneToTen,
    #[serde(rename = "-10to-1")]
    MinusTenToMinusOne,
    #[serde(rename = "le-10")]
    AtMostMinus10,
}

impl Band {
    pub const ALL: [Band; 4] = [Band::AtLeast10, Band::OneToTen, Band::MinusTenToMinusOne, Band::AtMostMinus10];

    pub fn classify(d: f64) -> Option<Band> {
        if d >= 10.0 {
            Some(Band::AtLeast10)
        } else if (1.0..10.0).contains(&d) {
            Some(Band::OneToTen)
        } else if d > -10.0 && d <= -1.0 {
            Some(Band::MinusTenToMinusOne)
        } else if d <= -10.0 {
            Some(Band::AtMostMinus10)
        } else {
            None
        }
    }

    pub fn mirrored(self) -> Band {
        match self {
            Band::AtLeast10 => Band::AtMostMinus10,
            Band::OneToTen => Band::MinusTenToMinusOne,
            Band::MinusTenToMinusOne => Band::OneToTen,
            Band::AtMostMinus10 => Band::AtLeast10,
        }
    }

    fn label(self) -> &'static str {
        match self {
            Band::AtLeast10 => "ge10",
            Band::OneToTen => "1to10",
            Band::MinusTenToMinusOne => "-10to-1",
            Band::AtMostMinus10 => "le-10",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConditionBucket {
    pub si_band: Band,
    pub psi_band: Band,
}

impl ConditionBucket {
    pub fn all() -> impl Iterator<Item = ConditionBucket> {
        Band::ALL
            .into_iter()
            .flat_map(|si_band| Band::ALL.into_iter().map(move |psi_band| ConditionBucket { si_band, psi_band }))
    }

    pub fn index(self) -> usize {
        let pos = |b: Band| Band::ALL.iter().position(|x| *x == b).expect("band listed");
        pos(self.si_band) * 4 + pos(self.psi_band)
    }

    pub fn mirrored(self) -> ConditionBucket {
        ConditionBucket { si_band: self.si_band.mirrored(), psi_band: self.psi_band.mirrored() }
    }
}

impl fmt::Display for ConditionBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SI {} / PSI {}", self.si_band.label(), self.psi_band.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandUnits {
    #[default]
    Percent,
    /// Raw difference in units of 100 ms.
    Absolute,
}

impl BandUnits {
    fn diff(self, a: f64, b: f64) -> Result<f64, IndexError> {
        match self {
            BandUnits::Percent => percent_diff(a, b),
            BandUnits::Absolute => {
                percent_diff(a, b)?;
                Ok((a - b) / 100.0)
            }
        }
    }
}

/// Condition bucket of a left/right pair, or `None` if the pair fails the
/// visual-complete gate or either difference falls between bands.
pub fn bucket_pair(
    left: &MetricReport,
    right: &MetricReport,
    units: BandUnits,
) -> Result<Option<ConditionBucket>, PairingError> {
    let vc = percent_diff(left.visual_complete_ms, right.visual_complete_ms)?;
    let d_si = units.diff(left.si_ms, right.si_ms)?;
    let d_psi = units.diff(left.psi_ms, right.psi_ms)?;
    if vc.abs() > VC_GATE_PERCENT {
        return Ok(None);
    }
    Ok(Band::classify(d_si).zip(Band::classify(d_psi)).map(|(si_band, psi_band)| ConditionBucket { si_band, psi_band }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoPair {
    pub pair_id: String,
    pub left: String,
    pub right: String,
    pub left_report: MetricReport,
    pub right_report: MetricReport,
    #[serde(default)]
    pub honeypot: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub honeypot_answer: Option<Choice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bucket: Option<ConditionBucket>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub set_id: Option<String>,
}

pub fn pair_id_for(left: &str, right: &str) -> String {
    format!("{left}~{right}")
}

impl VideoPair {
    pub fn assessment(left: MetricReport, right: MetricReport, bucket: Option<ConditionBucket>) -> Self {
        VideoPair {
            pair_id: pair_id_for(&left.source_id, &right.source_id),
            left: left.source_id.clone(),
            right: right.source_id.clone(),
            left_report: left,
            right_report: right,
            honeypot: false,
            honeypot_answer: None,
            bucket,
            set_id: None,
        }
    }

    /// A honeypot qualifies when one side's visual complete is at least three
    /// times the other's; the faster side is the expected answer.
    pub fn honeypot(left: MetricReport, right: MetricReport) -> Result<Self, PairingError> {
        let (l, r) = (left.visual_complete_ms, right.visual_complete_ms);
        let answer = if r >= HONEYPOT_VC_RATIO * l && l > 0.0 {
            Choice::Left
        } else if l >= HONEYPOT_VC_RATIO * r && r > 0.0 {
            Choice::Right
        } else {
            return Err(PairingError::NotObvious {
                pair_id: pair_id_for(&left.source_id, &right.source_id),
                left_vc: l,
                right_vc: r,
            });
        };
        let mut pair = VideoPair::assessment(left, right, None);
        pair.pair_id = format!("hp:{}", pair.pair_id);
        pair.honeypot = true;
        pair.honeypot_answer = Some(answer);
        Ok(pair)
    }

    pub fn validate(&self) -> Result<(), PairingError> {
        if self.left == self.right {
            return Err(PairingError::SamePage(self.pair_id.clone()));
        }
        if self.honeypot != self.honeypot_answer.is_some() {
            return Err(PairingError::HoneypotAnswer(self.pair_id.clone()));
        }
        Ok(())
    }

    /// The same pair with sides swapped.
    pub fn swapped(&self) -> VideoPair {
        VideoPair {
            pair_id: pair_id_for(&self.right, &self.left),
            left: self.right.clone(),
            right: self.left.clone(),
            left_report: self.right_report.clone(),
            right_report: self.left_report.clone(),
            honeypot: self.honeypot,
            honeypot_answer: self.honeypot_answer.map(Choice::mirrored),
            bucket: self.bucket.map(ConditionBucket::mirrored),
            set_id: self.set_id.clone(),
        }
    }

    pub fn max_visual_complete(&self) -> f64 {
        self.left_report.visual_complete_ms.max(self.right_report.visual_complete_ms)
    }
}

/// Per-bucket candidate pools in canonical bucket order.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub pools: Vec<(ConditionBucket, Vec<VideoPair>)>,
    pub candidates: Vec<usize>,
    pub underfilled: Vec<ConditionBucket>,
}

impl Selection {
    pub fn total(&self) -> usize {
        self.pools.iter().map(|(_, p)| p.len()).sum()
    }

    pub fn pool(&self, bucket: ConditionBucket) -> &[VideoPair] {
        &self.pools[bucket.index()].1
    }
}

/// Every eligible ordered pair of distinct page loads, grouped by bucket in
/// enumeration order.
pub fn candidate_pools(corpus: &[MetricReport], units: BandUnits) -> Result<Vec<Vec<VideoPair>>, PairingError> {
    let mut pools: Vec<Vec<VideoPair>> = vec![Vec::new(); 16];
    for (i, left) in corpus.iter().enumerate() {
        for (j, right) in corpus.iter().enumerate() {
            if i == j || left.source_id == right.source_id {
                continue;
            }
            if let Some(bucket) = bucket_pair(left, right, units)? {
                pools[bucket.index()].push(VideoPair::assessment(left.clone(), right.clone(), Some(bucket)));
            }
        }
    }
    Ok(pools)
}

/// Up to `per_bucket` candidates per bucket, chosen by a seeded shuffle.
pub fn select_pairs(
    corpus: &[MetricReport],
    per_bucket: usize,
    seed: u64,
    units: BandUnits,
) -> Result<Selection, PairingError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pools = Vec::with_capacity(16);
    let mut candidates = Vec::with_capacity(16);
    let mut underfilled = Vec::new();
    for (bucket, mut pool) in ConditionBucket::all().zip(candidate_pools(corpus, units)?) {
        candidates.push(pool.len());
        pool.shuffle(&mut rng);
        pool.truncate(per_bucket);
        if pool.len() < per_bucket {
            underfilled.push(bucket);
        }
        pools.push((bucket, pool));
    }
    Ok(Selection { pools, candidates, underfilled })
}

/// Draws `n` honeypots from the corpus: every unordered page pair that
/// qualifies is a candidate, sides are oriented at random, and no page is
/// used twice.
pub fn pick_honeypots(corpus: &[MetricReport], n: usize, seed: u64) -> Result<Vec<VideoPair>, PairingError> {
    let mut candidates = Vec::new();
    for i in 0..corpus.len() {
        for j in i + 1..corpus.len() {
            if corpus[i].source_id != corpus[j].source_id
                && VideoPair::honeypot(corpus[i].clone(), corpus[j].clone()).is_ok()
            {
                candidates.push((i, j));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    candidates.shuffle(&mut rng);
    let mut used = HashSet::new();
    let mut out = Vec::with_capacity(n);
    for (i, j) in candidates {
        if out.len() == n {
            break;
        }
        if used.contains(&i) || used.contains(&j) {
            continue;
        }
        used.extend([i, j]);
        let (l, r) = if rng.random::<bool>() { (i, j) } else { (j, i) };
        out.push(VideoPair::honeypot(corpus[l].clone(), corpus[r].clone())?);
    }
    if out.len() < n {
        return Err(PairingError::HoneypotCount(out.len()));
    }
    Ok(out)
}

/// One session's worth of pairs: one per bucket plus the shared honeypots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSet {
    pub set_id: String,
    pub assessment_pairs: Vec<VideoPair>,
    pub honeypots: Vec<VideoPair>,
}

impl PairSet {
    pub fn pairs(&self) -> impl Iterator<Item = &VideoPair> {
        self.assessment_pairs.iter().chain(self.honeypots.iter())
    }

    pub fn validate(&self) -> Result<(), PairingError> {
        let bad = |msg: String| Err(PairingError::Catalog(format!("set {}: {msg}", self.set_id)));
        if self.assessment_pairs.len() != ASSESSMENT_PAIRS_PER_SET {
            return bad(format!("{} assessment pairs", self.assessment_pairs.len()));
        }
        if self.honeypots.len() != HONEYPOTS_PER_SET {
            return Err(PairingError::HoneypotCount(self.honeypots.len()));
        }
        let buckets: HashSet<_> = self.assessment_pairs.iter().filter_map(|p| p.bucket).collect();
        if buckets.len() != ASSESSMENT_PAIRS_PER_SET {
            return bad("assessment pairs do not cover all 16 buckets".into());
        }
        let mut ids = HashSet::new();
        for p in self.pairs() {
            p.validate()?;
            if !ids.insert(p.pair_id.as_str()) {
                return Err(PairingError::DuplicatePair(p.pair_id.clone()));
            }
        }
        if self.assessment_pairs.iter().any(|p| p.honeypot) || self.honeypots.iter().any(|p| !p.honeypot) {
            return bad("honeypot flags misplaced".into());
        }
        Ok(())
    }
}

fn check_honeypots(honeypots: &[VideoPair]) -> Result<(), PairingError> {
    if honeypots.len() != HONEYPOTS_PER_SET {
        return Err(PairingError::HoneypotCount(honeypots.len()));
    }
    for hp in honeypots {
        hp.validate()?;
        let expected = VideoPair::honeypot(hp.left_report.clone(), hp.right_report.clone())?;
        if !hp.honeypot || hp.honeypot_answer != expected.honeypot_answer {
            return Err(PairingError::HoneypotAnswer(hp.pair_id.clone()));
        }
    }
    Ok(())
}

/// Deals pool entry `k` of every bucket into set `k`.
pub fn build_pair_sets(
    selection: &Selection,
    n_sets: usize,
    honeypots: &[VideoPair],
) -> Result<Vec<PairSet>, PairingError> {
    check_honeypots(honeypots)?;
    for (bucket, pool) in &selection.pools {
        if pool.len() < n_sets {
            return Err(PairingError::ShallowBucket { bucket: *bucket, depth: pool.len(), needed: n_sets });
        }
    }
    let width = n_sets.to_string().len().max(2);
    let mut seen = HashSet::new();
    let mut sets = Vec::with_capacity(n_sets);
    for k in 0..n_sets {
        let set_id = format!("set-{:0width$}", k + 1);
        let assessment_pairs = selection
            .pools
            .iter()
            .map(|(_, pool)| {
                let mut p = pool[k].clone();
                p.set_id = Some(set_id.clone());
                p
            })
            .collect::<Vec<_>>();
        for p in assessment_pairs.iter().chain(honeypots) {
            if !seen.insert(p.pair_id.clone()) && !p.honeypot {
                return Err(PairingError::DuplicatePair(p.pair_id.clone()));
            }
        }
        let set = PairSet { set_id, assessment_pairs, honeypots: honeypots.to_vec() };
        set.validate()?;
        sets.push(set);
    }
    Ok(sets)
}

/// Flattens sets into a catalog: assessment pairs set by set, then the
/// shared honeypots once.
pub fn catalog_from_sets(sets: &[PairSet]) -> Vec<VideoPair> {
    let mut out: Vec<VideoPair> = sets.iter().flat_map(|s| s.assessment_pairs.iter().cloned()).collect();
    if let Some(first) = sets.first() {
        out.extend(first.honeypots.iter().cloned());
    }
    out
}

/// Regroups a catalog into validated pair sets, ordered by set id.
pub fn sets_from_catalog(catalog: &[VideoPair]) -> Result<Vec<PairSet>, PairingError> {
    let mut ids = HashSet::new();
    for p in catalog {
        p.validate()?;
        if !ids.insert(p.pair_id.as_str()) {
            return Err(PairingError::DuplicatePair(p.pair_id.clone()));
        }
    }
    let honeypots: Vec<VideoPair> = catalog.iter().filter(|p| p.honeypot).cloned().collect();
    let mut set_ids: Vec<&str> = catalog.iter().filter(|p| !p.honeypot).filter_map(|p| p.set_id.as_deref()).collect();
    set_ids.sort_unstable();
    set_ids.dedup();
    if let Some(orphan) = catalog.iter().find(|p| !p.honeypot && p.set_id.is_none()) {
        return Err(PairingError::Catalog(format!("pair {} has no set", orphan.pair_id)));
    }
    set_ids
        .into_iter()
        .map(|set_id| {
            let set = PairSet {
                set_id: set_id.to_string(),
                assessment_pairs: catalog
                    .iter()
                    .filter(|p| !p.honeypot && p.set_id.as_deref() == Some(set_id))
                    .cloned()
                    .collect(),
                honeypots: honeypots.clone(),
            };
            set.validate()?;
            Ok(set)
        })
        .collect()
}
