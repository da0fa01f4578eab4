use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{AnalysisError, Metric};
use crate::choice::Choice;
use crate::indices::normalized_diff;
use crate::pairing::VideoPair;
use crate::records::VoteTally;

/// Outcome of a per-pair plurality vote.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Majority {
    Decided(Choice),
    /// Left and Right tied for first with Equal behind.
    Unresolved,
}

impl Majority {
    pub fn choice(self) -> Option<Choice> {
        match self {
            Majority::Decided(c) => Some(c),
            Majority::Unresolved => None,
        }
    }
}

/// Plurality of the three counts. A tie that includes Equal resolves to
/// Equal; a Left/Right tie is unresolved.
pub fn majority_vote(tally: &VoteTally) -> Result<Majority, AnalysisError> {
    let c = tally.counts;
    if c.total() == 0 {
        return Err(AnalysisError::EmptyTally(tally.pair_id.clone()));
    }
    let top = c.left.max(c.right).max(c.equal);
    Ok(if c.equal == top {
        Majority::Decided(Choice::Equal)
    } else if c.left == top && c.right == top {
        Majority::Unresolved
    } else if c.left == top {
        Majority::Decided(Choice::Left)
    } else {
        Majority::Decided(Choice::Right)
    })
}

/// Resolved majority per pair; empty and unresolved tallies are dropped.
pub fn majority_labels(tallies: &[VoteTally]) -> HashMap<String, Choice> {
    tallies.iter().filter_map(|t| Some((t.pair_id.clone(), majority_vote(t).ok()?.choice()?))).collect()
}

/// Non-honeypot catalog pairs that carry a resolved label, in catalog order.
pub fn labeled_pairs<'a>(catalog: &'a [VideoPair], labels: &HashMap<String, Choice>) -> Vec<(&'a VideoPair, Choice)> {
    catalog.iter().filter(|p| !p.honeypot).filter_map(|p| labels.get(&p.pair_id).map(|&c| (p, c))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticVote {
    pub pair_id: String,
    pub metric: Metric,
    pub choice: Choice,
    pub threshold: f64,
}

/// The smaller metric value is the faster page: Left if the normalized
/// difference is below `-threshold`, Right above `+threshold`, else Equal.
pub fn synthetic_vote(left: f64, right: f64, threshold: f64) -> Result<Choice, AnalysisError> {
    let d = normalized_diff(left, right)?;
    Ok(if d < -threshold {
        Choice::Left
    } else if d > threshold {
        Choice::Right
    } else {
        Choice::Equal
    })
}

impl SyntheticVote {
    pub fn for_pair(pair: &VideoPair, metric: Metric, threshold: f64) -> Result<Self, AnalysisError> {
        let missing = || AnalysisError::MissingMetric { metric, pair_id: pair.pair_id.clone() };
        let l = metric.value(&pair.left_report).ok_or_else(missing)?;
        let r = metric.value(&pair.right_report).ok_or_else(missing)?;
        Ok(SyntheticVote { pair_id: pair.pair_id.clone(), metric, choice: synthetic_vote(l, r, threshold)?, threshold })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchScore {
    pub metric: Metric,
    pub matched: usize,
    pub total: usize,
    pub fraction: f64,
}

/// Share of labeled pairs whose synthetic vote for `metric` equals the
/// majority. Pairs lacking the metric on either side are left out.
pub fn percentage_match(
    metric: Metric,
    pairs: &[(&VideoPair, Choice)],
    threshold: f64,
) -> Result<MatchScore, AnalysisError> {
    let mut matched = 0;
    let mut total = 0;
    for (pair, label) in pairs {
        let vote = match SyntheticVote::for_pair(pair, metric, threshold) {
            Ok(v) => v,
            Err(AnalysisError::MissingMetric { .. }) => continue,
            Err(e) => return Err(e),
        };
        total += 1;
        if vote.choice == *label {
            matched += 1;
        }
    }
    if total == 0 {
        return Err(AnalysisError::NoResolvablePairs(metric));
    }
    Ok(MatchScore { metric, matched, total, fraction: matched as f64 / total as f64 })
}

/// Scores for every metric with at least one scorable pair, best first
/// (ties by metric name).
pub fn match_ranking(
    metrics: &[Metric],
    pairs: &[(&VideoPair, Choice)],
    threshold: f64,
) -> Result<Vec<MatchScore>, AnalysisError> {
    let mut rows = Vec::new();
    for &m in metrics {
        match percentage_match(m, pairs, threshold) {
            Ok(s) => rows.push(s),
            Err(AnalysisError::NoResolvablePairs(_)) => {}
            Err(e) => return Err(e),
        }
    }
    rows.sort_by(|a, b| b.fraction.total_cmp(&a.fraction).then_with(|| a.metric.name().cmp(b.metric.name())));
    Ok(rows)
}

/// An externally produced prediction for one pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub pair_id: String,
    pub choice: Choice,
}

/// Accuracy of external predictions over the pairs that have a label.
pub fn score_predictions(
    predictions: &[Prediction],
    labels: &HashMap<String, Choice>,
) -> Result<(usize, usize), AnalysisError> {
    let scored: Vec<bool> = predictions.iter().filter_map(|p| labels.get(&p.pair_id).map(|l| *l == p.choice)).collect();
    if scored.is_empty() {
        return Err(AnalysisError::TooFewRows { needed: 1, got: 0 });
    }
    Ok((scored.iter().filter(|&&ok| ok).count(), scored.len()))
}
