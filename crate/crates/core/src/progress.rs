//! Visual completeness curves and load-event detection.
//!
//! Two completeness measures are provided. The histogram measure (MHD) is
//! blind to where pixels sit, which is how SpeedIndex behaves. The SSIM
//! measure compares local structure against the final frame, so layout
//! shifts and jitter lower its completeness.

use image::GrayImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::filmstrip::{histogram, to_grayscale, Filmstrip};

/// Completeness values within this distance of 100 count as complete.
pub const COMPLETE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProgressError {
    #[error("raster dimensions differ: {0:?} vs {1:?}")]
    DimensionMismatch((u32, u32), (u32, u32)),
    #[error("raster {width}x{height} is smaller than the {window}px SSIM window")]
    TooSmall { width: u32, height: u32, window: u32 },
    #[error("invalid SSIM parameters: {0}")]
    InvalidParams(&'static str),
    #[error("invalid progress curve: {0}")]
    InvalidCurve(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompletenessMethod {
    Mhd,
    Ssim,
}

/// Visual completeness in percent, one sample per filmstrip frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCurve")]
pub struct ProgressCurve {
    method: CompletenessMethod,
    samples: Vec<(u64, f64)>,
}

#[derive(Deserialize)]
struct RawCurve {
    method: CompletenessMethod,
    samples: Vec<(u64, f64)>,
}

impl TryFrom<RawCurve> for ProgressCurve {
    type Error = ProgressError;

    fn try_from(raw: RawCurve) -> Result<Self, Self::Error> {
        ProgressCurve::new(raw.method, raw.samples)
    }
}

impl ProgressCurve {
    /// Checks: at least one sample, first at t = 0 with completeness 0, last
    /// at 100, strictly increasing timestamps, all values within [0, 100].
    pub fn new(method: CompletenessMethod, samples: Vec<(u64, f64)>) -> Result<Self, ProgressError> {
        let invalid = |msg: String| Err(ProgressError::InvalidCurve(msg));
        let (Some(first), Some(last)) = (samples.first(), samples.last()) else {
            return invalid("no samples".into());
        };
        if first.0 != 0 {
            return invalid(format!("first sample at {} ms, expected 0", first.0));
        }
        if first.1 != 0.0 {
            return invalid(format!("first completeness {} must be 0", first.1));
        }
        if last.1 != 100.0 {
            return invalid(format!("last completeness {} must be 100", last.1));
        }
        for (i, w) in samples.windows(2).enumerate() {
            if w[1].0 <= w[0].0 {
                return invalid(format!("sample {} timestamp {} not increasing", i + 1, w[1].0));
            }
        }
        if let Some((t, c)) = samples.iter().find(|(_, c)| !(0.0..=100.0).contains(c)) {
            return invalid(format!("completeness {c} at {t} ms outside [0, 100]"));
        }
        Ok(ProgressCurve { method, samples })
    }

    pub fn method(&self) -> CompletenessMethod {
        self.method
    }

    pub fn samples(&self) -> &[(u64, f64)] {
        &self.samples
    }

    pub fn last_timestamp(&self) -> u64 {
        self.samples.last().map(|s| s.0).unwrap_or(0)
    }
}

/// Parameters of the uniform-window mean SSIM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimParams {
    pub window: u32,
    pub stride: u32,
    pub c1: f64,
    pub c2: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        SsimParams { window: 8, stride: 4, c1: (0.01f64 * 255.0).powi(2), c2: (0.03f64 * 255.0).powi(2) }
    }
}

impl SsimParams {
    pub fn validate(&self) -> Result<(), ProgressError> {
        if self.window < 3 {
            return Err(ProgressError::InvalidParams("window must be >= 3"));
        }
        if self.stride < 1 {
            return Err(ProgressError::InvalidParams("stride must be >= 1"));
        }
        if !(self.c1 > 0.0 && self.c1.is_finite()) || !(self.c2 > 0.0 && self.c2.is_finite()) {
            return Err(ProgressError::InvalidParams("c1 and c2 must be positive"));
        }
        Ok(())
    }
}

/// How raw SSIM scores map onto completeness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SsimNormalization {
    /// `(s - s0) / (1 - s0)`, anchoring the first frame at 0.
    #[default]
    Affine,
    /// Raw SSIM clamped to [0, 1]; the first sample is still pinned to 0.
    Raw,
}

/// Summed-area tables over luma, luma squared and (optionally) the cross
/// product. Integer sums keep window statistics exact.
struct Integral {
    width: usize,
    sum: Vec<u64>,
    sq: Vec<u64>,
}

impl Integral {
    fn new(img: &GrayImage) -> Self {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let stride = w + 1;
        let mut sum = vec![0u64; stride * (h + 1)];
        let mut sq = vec![0u64; stride * (h + 1)];
        for y in 0..h {
            let (mut row_sum, mut row_sq) = (0u64, 0u64);
            for x in 0..w {
                let v = u64::from(img.get_pixel(x as u32, y as u32).0[0]);
                row_sum += v;
                row_sq += v * v;
                let i = (y + 1) * stride + x + 1;
                sum[i] = sum[i - stride] + row_sum;
                sq[i] = sq[i - stride] + row_sq;
            }
        }
        Integral { width: stride, sum, sq }
    }

    fn cross(a: &GrayImage, b: &GrayImage) -> Vec<u64> {
        let (w, h) = (a.width() as usize, a.height() as usize);
        let stride = w + 1;
        let mut out = vec![0u64; stride * (h + 1)];
        for y in 0..h {
            let mut row = 0u64;
            for x in 0..w {
                let va = u64::from(a.get_pixel(x as u32, y as u32).0[0]);
                let vb = u64::from(b.get_pixel(x as u32, y as u32).0[0]);
                row += va * vb;
                let i = (y + 1) * stride + x + 1;
                out[i] = out[i - stride] + row;
            }
        }
        out
    }

    fn rect(table: &[u64], stride: usize, x: usize, y: usize, n: usize) -> u64 {
        let (x1, y1) = (x + n, y + n);
        table[y1 * stride + x1] + table[y * stride + x] - table[y * stride + x1] - table[y1 * stride + x]
    }
}

/// Mean SSIM over square windows placed every `stride` pixels.
///
/// Local SSIM is `((2 ma mb + c1)(2 sab + c2)) / ((ma^2 + mb^2 + c1)(sa^2 + sb^2 + c2))`
/// with population (divide-by-n) variances, and the result is the
/// unweighted mean over windows.
pub fn ssim(a: &GrayImage, b: &GrayImage, params: &SsimParams) -> Result<f64, ProgressError> {
    params.validate()?;
    if a.dimensions() != b.dimensions() {
        return Err(ProgressError::DimensionMismatch(a.dimensions(), b.dimensions()));
    }
    let (width, height) = a.dimensions();
    if width < params.window || height < params.window {
        return Err(ProgressError::TooSmall { width, height, window: params.window });
    }
    let ia = Integral::new(a);
    let ib = Integral::new(b);
    let cross = Integral::cross(a, b);
    let stride = ia.width;
    let n = params.window as usize;
    let n_px = (n * n) as i128;
    let n2 = (n_px * n_px) as f64;

    let mut total = 0.0;
    let mut count = 0usize;
    for y in (0..=(height - params.window) as usize).step_by(params.stride as usize) {
        for x in (0..=(width - params.window) as usize).step_by(params.stride as usize) {
            let sa = i128::from(Integral::rect(&ia.sum, stride, x, y, n));
            let sb = i128::from(Integral::rect(&ib.sum, stride, x, y, n));
            let saa = i128::from(Integral::rect(&ia.sq, stride, x, y, n));
            let sbb = i128::from(Integral::rect(&ib.sq, stride, x, y, n));
            let sab = i128::from(Integral::rect(&cross, stride, x, y, n));
            // Everything below is scaled by n^2 and exact until the division.
            let mean_prod = (2 * sa * sb) as f64 / n2;
            let mean_sq = (sa * sa + sb * sb) as f64 / n2;
            let cov = (2 * (n_px * sab - sa * sb)) as f64 / n2;
            let var = ((n_px * saa - sa * sa) + (n_px * sbb - sb * sb)) as f64 / n2;
            total += ((mean_prod + params.c1) * (cov + params.c2)) / ((mean_sq + params.c1) * (var + params.c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Histogram-distance completeness: `100 * min(1, d(t) / d(end))` where
/// `d(t)` is the L1 distance between frame t's histogram and the first one.
pub fn mhd_completeness(strip: &Filmstrip) -> ProgressCurve {
    let frames = strip.frames();
    let base = histogram(&frames[0]);
    let dists: Vec<u64> = frames.par_iter().map(|f| histogram(f).l1_distance(&base)).collect();
    let d_end = *dists.last().expect("non-empty");
    let last = frames.len() - 1;
    let samples = frames
        .iter()
        .zip(dists.iter())
        .enumerate()
        .map(|(i, (f, &d))| {
            let c = if i == 0 {
                0.0
            } else if i == last || d_end == 0 {
                100.0
            } else {
                100.0 * (d as f64 / d_end as f64).min(1.0)
            };
            (f.t_ms, c)
        })
        .collect();
    ProgressCurve { method: CompletenessMethod::Mhd, samples }
}

/// SSIM of every frame against the final frame, before normalization.
pub fn ssim_to_final(strip: &Filmstrip, params: &SsimParams) -> Result<Vec<f64>, ProgressError> {
    let gray: Vec<GrayImage> = strip.frames().par_iter().map(to_grayscale).collect();
    let target = gray.last().expect("non-empty");
    gray.par_iter().map(|g| ssim(g, target, params)).collect()
}

pub fn ssim_completeness(strip: &Filmstrip, params: &SsimParams) -> Result<ProgressCurve, ProgressError> {
    ssim_completeness_with(strip, params, SsimNormalization::Affine)
}

pub fn ssim_completeness_with(
    strip: &Filmstrip,
    params: &SsimParams,
    normalization: SsimNormalization,
) -> Result<ProgressCurve, ProgressError> {
    let scores = ssim_to_final(strip, params)?;
    let s0 = scores[0];
    let identical_ends = s0 >= 1.0 - COMPLETE_EPS;
    let last = scores.len() - 1;
    let samples = strip
        .frames()
        .iter()
        .zip(scores.iter())
        .enumerate()
        .map(|(i, (f, &s))| {
            let c = if i == 0 {
                0.0
            } else if i == last || identical_ends {
                100.0
            } else {
                let frac = match normalization {
                    SsimNormalization::Affine => (s - s0) / (1.0 - s0),
                    SsimNormalization::Raw => s,
                };
                100.0 * frac.clamp(0.0, 1.0)
            };
            (f.t_ms, c)
        })
        .collect();
    Ok(ProgressCurve { method: CompletenessMethod::Ssim, samples })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderParams {
    /// A channel below `255 - near_white_tol` marks a pixel as painted.
    pub near_white_tol: u8,
    /// Fraction of painted pixels that must be exceeded.
    pub min_pixel_frac: f64,
}

impl Default for RenderParams {
    fn default() -> Self {
        RenderParams { near_white_tol: 8, min_pixel_frac: 0.005 }
    }
}

/// First frame whose share of non-white pixels exceeds `min_pixel_frac`.
pub fn detect_render_start(strip: &Filmstrip, near_white_tol: u8, min_pixel_frac: f64) -> Option<u64> {
    let cutoff = 255u8.saturating_sub(near_white_tol);
    strip.frames().iter().find_map(|frame| {
        let painted = frame.pixels.pixels().filter(|p| p.0.iter().any(|&v| v < cutoff)).count();
        let frac = painted as f64 / frame.pixel_count() as f64;
        (frac > min_pixel_frac).then_some(frame.t_ms)
    })
}

pub fn is_complete(completeness: f64) -> bool {
    completeness >= 100.0 - COMPLETE_EPS
}

/// Earliest timestamp from which every later sample stays complete.
pub fn detect_visual_complete(curve: &ProgressCurve) -> u64 {
    let samples = curve.samples();
    let mut t = curve.last_timestamp();
    for &(ts, c) in samples.iter().rev() {
        if !is_complete(c) {
            break;
        }
        t = ts;
    }
    t
}
