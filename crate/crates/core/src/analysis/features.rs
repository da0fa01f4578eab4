use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{AnalysisError, Metric};
use crate::choice::Choice;
use crate::indices::normalized_diff;
use crate::pairing::VideoPair;

/// Normalized differences of a pair's metrics, keyed by metric name. The
/// map order (lexicographic names) is the column order models see.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub pair_id: String,
    pub features: BTreeMap<String, f64>,
    pub label: Choice,
}

impl FeatureRow {
    pub fn values(&self) -> Vec<f64> {
        self.features.values().copied().collect()
    }

    pub fn names(&self) -> Vec<&str> {
        self.features.keys().map(String::as_str).collect()
    }
}

/// The five feature sets compared in the joint model study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureSet {
    #[serde(rename = "onload")]
    OnLoad,
    #[serde(rename = "si")]
    Si,
    #[serde(rename = "synthetic_all+si+psi")]
    SyntheticAllSiPsi,
    #[serde(rename = "psi_ttc+si_ttc+render")]
    TtcRender,
    #[serde(rename = "synthetic_all+si_ttc+psi_ttc")]
    SyntheticAllTtc,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 5] = [
        FeatureSet::OnLoad,
        FeatureSet::Si,
        FeatureSet::SyntheticAllSiPsi,
        FeatureSet::TtcRender,
        FeatureSet::SyntheticAllTtc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureSet::OnLoad => "onload",
            FeatureSet::Si => "si",
            FeatureSet::SyntheticAllSiPsi => "synthetic_all+si+psi",
            FeatureSet::TtcRender => "psi_ttc+si_ttc+render",
            FeatureSet::SyntheticAllTtc => "synthetic_all+si_ttc+psi_ttc",
        }
    }

    pub fn metrics(self) -> Vec<Metric> {
        match self {
            FeatureSet::OnLoad => vec![Metric::Onload],
            FeatureSet::Si => vec![Metric::Si],
            FeatureSet::SyntheticAllSiPsi => {
                let mut m = Metric::SYNTHETIC_ALL.to_vec();
                m.extend([Metric::Si, Metric::Psi]);
                m
            }
            FeatureSet::TtcRender => vec![Metric::PsiTtc, Metric::SiTtc, Metric::Render],
            FeatureSet::SyntheticAllTtc => {
                let mut m = Metric::SYNTHETIC_ALL.to_vec();
                m.extend([Metric::SiTtc, Metric::PsiTtc]);
                m
            }
        }
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureSet {
    type Err = AnalysisError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FeatureSet::ALL.into_iter().find(|f| f.name() == s).ok_or_else(|| AnalysisError::UnknownMetric(s.to_string()))
    }
}

/// One row per labeled pair with the normalized difference of each metric.
pub fn build_features(pairs: &[(&VideoPair, Choice)], metrics: &[Metric]) -> Result<Vec<FeatureRow>, AnalysisError> {
    pairs
        .iter()
        .map(|(pair, label)| {
            let mut features = BTreeMap::new();
            for &metric in metrics {
                let missing = || AnalysisError::MissingMetric { metric, pair_id: pair.pair_id.clone() };
                let l = metric.value(&pair.left_report).ok_or_else(missing)?;
                let r = metric.value(&pair.right_report).ok_or_else(missing)?;
                features.insert(metric.name().to_string(), normalized_diff(l, r)?);
            }
            Ok(FeatureRow { pair_id: pair.pair_id.clone(), features, label: *label })
        })
        .collect()
}
