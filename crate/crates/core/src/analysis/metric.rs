use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::indices::MetricReport;

/// A synthetic metric available on a [`MetricReport`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Ttfb,
    Dclend,
    Onload,
    FirstPaint,
    Render,
    VisualComplete,
    Si,
    Psi,
    SiOnload,
    PsiOnload,
    SiTtc,
    PsiTtc,
}

impl Metric {
    pub const ALL: [Metric; 12] = [
        Metric::Ttfb,
        Metric::Dclend,
        Metric::Onload,
        Metric::FirstPaint,
        Metric::Render,
        Metric::VisualComplete,
        Metric::Si,
        Metric::Psi,
        Metric::SiOnload,
        Metric::PsiOnload,
        Metric::SiTtc,
        Metric::PsiTtc,
    ];

    /// Non-TTC metrics other than full-length SI and PSI.
    pub const SYNTHETIC_ALL: [Metric; 8] = [
        Metric::Ttfb,
        Metric::Dclend,
        Metric::Onload,
        Metric::FirstPaint,
        Metric::Render,
        Metric::VisualComplete,
        Metric::SiOnload,
        Metric::PsiOnload,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Ttfb => "ttfb",
            Metric::Dclend => "dclend",
            Metric::Onload => "onload",
            Metric::FirstPaint => "first_paint",
            Metric::Render => "render",
            Metric::VisualComplete => "visual_complete",
            Metric::Si => "si",
            Metric::Psi => "psi",
            Metric::SiOnload => "si_onload",
            Metric::PsiOnload => "psi_onload",
            Metric::SiTtc => "si_ttc",
            Metric::PsiTtc => "psi_ttc",
        }
    }

    pub fn value(self, r: &MetricReport) -> Option<f64> {
        match self {
            Metric::Ttfb => Some(r.ttfb_ms),
            Metric::Dclend => r.dclend_ms,
            Metric::Onload => Some(r.onload_ms),
            Metric::FirstPaint => r.first_paint_ms,
            Metric::Render => r.render_ms,
            Metric::VisualComplete => Some(r.visual_complete_ms),
            Metric::Si => Some(r.si_ms),
            Metric::Psi => Some(r.psi_ms),
            Metric::SiOnload => Some(r.si_onload_ms),
            Metric::PsiOnload => Some(r.psi_onload_ms),
            Metric::SiTtc => r.si_ttc_ms,
            Metric::PsiTtc => r.psi_ttc_ms,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = AnalysisError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| AnalysisError::UnknownMetric(s.to_string()))
    }
}
