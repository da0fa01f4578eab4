//! SpeedIndex-style integrals over progress curves, normalized differences,
//! and per-page metric reports.
//!
//! Integration is a left-rectangle (hold-previous) sum: the completeness of a
//! frame holds until the next frame is captured, the same way a filmstrip is
//! displayed. An endpoint past the last frame extends the final value.

use serde::{Deserialize, Serialize};

use crate::filmstrip::Filmstrip;
use crate::har::TimingRecord;
use crate::progress::{
    detect_render_start, detect_visual_complete, mhd_completeness, ssim_completeness_with, ProgressCurve,
    ProgressError, RenderParams, SsimNormalization, SsimParams,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IndexError {
    #[error("integration endpoint must be a positive finite time, got {0}")]
    InvalidEndpoint(f64),
    #[error("normalized difference needs non-negative inputs, got ({0}, {1})")]
    NegativeInput(f64, f64),
    #[error("endpoint {0} is not available for this page load")]
    MissingEndpoint(&'static str),
    #[error(transparent)]
    Progress(#[from] ProgressError),
}

/// `∫_0^end (1 - completeness/100) dt` as a left-rectangle sum.
pub fn integrate_index(curve: &ProgressCurve, end_ms: f64) -> Result<f64, IndexError> {
    if !(end_ms.is_finite() && end_ms > 0.0) {
        return Err(IndexError::InvalidEndpoint(end_ms));
    }
    let samples = curve.samples();
    let mut total = 0.0;
    for (i, &(t, completeness)) in samples.iter().enumerate() {
        let start = t as f64;
        if start >= end_ms {
            break;
        }
        let stop = samples.get(i + 1).map_or(end_ms, |next| (next.0 as f64).min(end_ms));
        total += (1.0 - completeness / 100.0) * (stop - start);
    }
    Ok(total.clamp(0.0, end_ms))
}

/// Where to stop integrating.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    OnLoad,
    Ttc,
    VisualComplete,
    Custom(f64),
}

/// Page-load times that endpoints may refer to.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EndpointTimes {
    pub onload_ms: Option<f64>,
    pub ttc_ms: Option<f64>,
}

pub fn resolve_endpoint(curve: &ProgressCurve, endpoint: Endpoint, times: &EndpointTimes) -> Result<f64, IndexError> {
    match endpoint {
        Endpoint::OnLoad => times.onload_ms.ok_or(IndexError::MissingEndpoint("onLoad")),
        Endpoint::Ttc => times.ttc_ms.ok_or(IndexError::MissingEndpoint("TTC")),
        Endpoint::VisualComplete => Ok(visual_complete_end(curve)),
        Endpoint::Custom(ms) => Ok(ms),
    }
}

pub fn truncated_index(curve: &ProgressCurve, endpoint: Endpoint, times: &EndpointTimes) -> Result<f64, IndexError> {
    integrate_index(curve, resolve_endpoint(curve, endpoint, times)?)
}

// A strip that is complete at t = 0 only happens for an empty change set; the
// integral is then 0 and any positive endpoint gives that.
fn visual_complete_end(curve: &ProgressCurve) -> f64 {
    (detect_visual_complete(curve) as f64).max(f64::MIN_POSITIVE)
}

/// Histogram-based SpeedIndex integrated to the curve's own visual complete.
pub fn speed_index(strip: &Filmstrip) -> f64 {
    let curve = mhd_completeness(strip);
    integrate_index(&curve, visual_complete_end(&curve)).expect("positive endpoint")
}

/// SSIM-based Perceptual SpeedIndex integrated to the SSIM curve's visual complete.
pub fn perceptual_speed_index(strip: &Filmstrip, params: &SsimParams) -> Result<f64, IndexError> {
    let curve = crate::progress::ssim_completeness(strip, params)?;
    integrate_index(&curve, visual_complete_end(&curve))
}

/// `(a - b) / (0.5 (a + b))`, with `diff(0, 0) = 0`.
pub fn normalized_diff(a: f64, b: f64) -> Result<f64, IndexError> {
    if !(a >= 0.0 && b >= 0.0) {
        return Err(IndexError::NegativeInput(a, b));
    }
    if a == 0.0 && b == 0.0 {
        return Ok(0.0);
    }
    Ok((a - b) / (0.5 * (a + b)))
}

/// Normalized difference in percent. The scaling is applied before the
/// division so that representable percentages come out exact.
pub fn percent_diff(a: f64, b: f64) -> Result<f64, IndexError> {
    if !(a >= 0.0 && b >= 0.0) {
        return Err(IndexError::NegativeInput(a, b));
    }
    if a == 0.0 && b == 0.0 {
        return Ok(0.0);
    }
    Ok(100.0 * (a - b) / (0.5 * (a + b)))
}

/// Every synthetic metric for one page load, in milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub source_id: String,
    pub ttfb_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dclend_ms: Option<f64>,
    pub onload_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_paint_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub render_ms: Option<f64>,
    pub visual_complete_ms: f64,
    pub si_ms: f64,
    pub psi_ms: f64,
    pub si_onload_ms: f64,
    pub psi_onload_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub si_ttc_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi_ttc_ms: Option<f64>,
}

/// Both completeness curves of a page load, kept so that TTC-truncated
/// indices can be computed once votes are in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageCurves {
    pub source_id: String,
    pub mhd: ProgressCurve,
    pub ssim: ProgressCurve,
}

impl PageCurves {
    pub fn from_strip(strip: &Filmstrip, opts: &ReportOptions) -> Result<Self, IndexError> {
        Ok(PageCurves {
            source_id: strip.source_id().to_string(),
            mhd: mhd_completeness(strip),
            ssim: ssim_completeness_with(strip, &opts.ssim, opts.ssim_normalization)?,
        })
    }

    /// `(SI_TTC, PSI_TTC)` for the given time to click.
    pub fn ttc_indices(&self, ttc_ms: f64) -> Result<(f64, f64), IndexError> {
        Ok((integrate_index(&self.mhd, ttc_ms)?, integrate_index(&self.ssim, ttc_ms)?))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportOptions {
    pub ssim: SsimParams,
    pub ssim_normalization: SsimNormalization,
    pub render: RenderParams,
}

/// Assembles a [`MetricReport`] from frames and navigation timings. The
/// report takes the filmstrip's `source_id`; visual complete comes from the
/// histogram curve.
pub fn metric_report(
    strip: &Filmstrip,
    timings: &TimingRecord,
    ttc_ms: Option<f64>,
    opts: &ReportOptions,
) -> Result<MetricReport, IndexError> {
    let curves = PageCurves::from_strip(strip, opts)?;
    report_from_curves(strip, &curves, timings, ttc_ms, opts)
}

pub fn report_from_curves(
    strip: &Filmstrip,
    curves: &PageCurves,
    timings: &TimingRecord,
    ttc_ms: Option<f64>,
    opts: &ReportOptions,
) -> Result<MetricReport, IndexError> {
    let vc = visual_complete_end(&curves.mhd);
    let psi_vc = visual_complete_end(&curves.ssim);
    let onload = timings.onload_ms;
    let (si_ttc_ms, psi_ttc_ms) = match ttc_ms {
        Some(ttc) => {
            let (si, psi) = curves.ttc_indices(ttc)?;
            (Some(si), Some(psi))
        }
        None => (None, None),
    };
    Ok(MetricReport {
        source_id: strip.source_id().to_string(),
        ttfb_ms: timings.ttfb_ms,
        dclend_ms: timings.dclend_ms,
        onload_ms: onload,
        first_paint_ms: timings.first_paint_ms,
        render_ms: detect_render_start(strip, opts.render.near_white_tol, opts.render.min_pixel_frac).map(|t| t as f64),
        visual_complete_ms: detect_visual_complete(&curves.mhd) as f64,
        si_ms: integrate_index(&curves.mhd, vc)?,
        psi_ms: integrate_index(&curves.ssim, psi_vc)?,
        si_onload_ms: integrate_index(&curves.mhd, onload)?,
        psi_onload_ms: integrate_index(&curves.ssim, onload)?,
        si_ttc_ms,
        psi_ttc_ms,
    })
}
