use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{AnalysisError, Metric};
use crate::choice::Choice;
use crate::indices::PageCurves;
use crate::pairing::VideoPair;
use crate::records::{VoteExport, VoteRecord};

/// Which time to click truncates SI/PSI for a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TtcMode {
    /// Median over the pair's own majority-aligned votes.
    #[default]
    PerPair,
    /// One median over all majority-aligned votes.
    Global,
}

/// Median of a sample; the mean of the two middle values for even sizes.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len().is_multiple_of(2) { 0.5 * (v[mid - 1] + v[mid]) } else { v[mid] })
}

/// Valid-session votes that agree with their pair's majority label.
pub fn majority_aligned_votes<'a>(export: &'a VoteExport, labels: &HashMap<String, Choice>) -> Vec<&'a VoteRecord> {
    export.valid_votes().filter(|v| labels.get(&v.pair_id) == Some(&v.choice)).collect()
}

pub fn ttc_by_pair(aligned: &[&VoteRecord], mode: TtcMode) -> HashMap<String, f64> {
    let mut per_pair: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for v in aligned {
        per_pair.entry(v.pair_id.as_str()).or_default().push(v.ttc_ms);
    }
    match mode {
        TtcMode::PerPair => {
            per_pair.into_iter().filter_map(|(id, ttcs)| Some((id.to_string(), median(&ttcs)?))).collect()
        }
        TtcMode::Global => {
            let all: Vec<f64> = aligned.iter().map(|v| v.ttc_ms).collect();
            match median(&all) {
                Some(m) => per_pair.into_keys().map(|id| (id.to_string(), m)).collect(),
                None => HashMap::new(),
            }
        }
    }
}

/// Fills `si_ttc_ms` / `psi_ttc_ms` on both sides of every pair that has a
/// TTC. Returns how many pairs were updated.
pub fn attach_ttc_indices(
    pairs: &mut [VideoPair],
    ttc: &HashMap<String, f64>,
    curves: &HashMap<String, PageCurves>,
) -> Result<usize, AnalysisError> {
    let mut updated = 0;
    for pair in pairs.iter_mut() {
        let Some(&t) = ttc.get(&pair.pair_id) else { continue };
        for report in [&mut pair.left_report, &mut pair.right_report] {
            let c =
                curves.get(&report.source_id).ok_or_else(|| AnalysisError::MissingCurves(report.source_id.clone()))?;
            let (si, psi) = c.ttc_indices(t)?;
            report.si_ttc_ms = Some(si);
            report.psi_ttc_ms = Some(psi);
        }
        updated += 1;
    }
    Ok(updated)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TtcPositionRow {
    pub metric: Metric,
    /// Percent of votes clicked before both pages reached the milestone.
    pub before: f64,
    pub between: f64,
    pub after: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TtcReport {
    pub median_ttc_ms: Option<f64>,
    pub rows: Vec<TtcPositionRow>,
}

/// Classifies each vote's TTC against the two sides' milestone values:
/// before `min`, after `max`, otherwise between.
pub fn ttc_positions(
    votes: &[&VoteRecord],
    pairs: &HashMap<String, &VideoPair>,
    milestones: &[Metric],
) -> Result<TtcReport, AnalysisError> {
    let mut rows = Vec::with_capacity(milestones.len());
    for &metric in milestones {
        let (mut before, mut between, mut after) = (0usize, 0usize, 0usize);
        for v in votes {
            let Some(pair) = pairs.get(&v.pair_id) else { continue };
            let missing = || AnalysisError::MissingMetric { metric, pair_id: pair.pair_id.clone() };
            let a = metric.value(&pair.left_report).ok_or_else(missing)?;
            let b = metric.value(&pair.right_report).ok_or_else(missing)?;
            let (lo, hi) = (a.min(b), a.max(b));
            if v.ttc_ms < lo {
                before += 1;
            } else if v.ttc_ms > hi {
                after += 1;
            } else {
                between += 1;
            }
        }
        let n = before + between + after;
        let pct = |x: usize| if n == 0 { 0.0 } else { 100.0 * x as f64 / n as f64 };
        rows.push(TtcPositionRow { metric, before: pct(before), between: pct(between), after: pct(after), n });
    }
    let ttcs: Vec<f64> = votes.iter().filter(|v| pairs.contains_key(&v.pair_id)).map(|v| v.ttc_ms).collect();
    Ok(TtcReport { median_ttc_ms: median(&ttcs), rows })
}
