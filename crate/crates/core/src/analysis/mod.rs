//! Offline analysis of pairwise votes against synthetic metrics.
//!
//! The pipeline is: tally valid votes into per-pair majorities, derive a
//! synthetic vote per metric from each pair's normalized difference, score
//! how often they agree, look at where clicks land relative to load events,
//! and fit a random forest on the normalized differences.

mod features;
mod forest;
mod metric;
mod ttc;
mod votes;

pub use features::{build_features, FeatureRow, FeatureSet};
pub use forest::{cross_validate, predict, train_forest, CvResult, DecisionTree, ForestModel, ForestParams};
pub use metric::Metric;
pub use ttc::{
    attach_ttc_indices, majority_aligned_votes, median, ttc_by_pair, ttc_positions, TtcMode, TtcPositionRow, TtcReport,
};
pub use votes::{
    labeled_pairs, majority_labels, majority_vote, match_ranking, percentage_match, score_predictions, synthetic_vote,
    Majority, MatchScore, Prediction, SyntheticVote,
};

use crate::indices::IndexError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error("tally for pair {0:?} is empty")]
    EmptyTally(String),
    #[error("metric {metric} missing for pair {pair_id:?}")]
    MissingMetric { metric: Metric, pair_id: String },
    #[error("no pairs with a resolved majority and metric {0}")]
    NoResolvablePairs(Metric),
    #[error("pair {0:?} has no majority label")]
    MissingLabel(String),
    #[error("unknown metric {0:?}")]
    UnknownMetric(String),
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("training data contains a single class")]
    SingleClass,
    #[error("feature rows disagree on feature names")]
    FeatureMismatch,
    #[error("no page curves for {0:?}")]
    MissingCurves(String),
    #[error("invalid parameter: {0}")]
    InvalidParam(&'static str),
    #[error(transparent)]
    Index(#[from] IndexError),
}
