//! Above-the-fold (ATF) page-load QoE toolkit.
//!
//! The crate turns timestamped page-load filmstrips and HAR timings into
//! visual progress metrics (SpeedIndex, Perceptual SpeedIndex and their
//! endpoint-truncated variants), classifies A/B page pairs into experimental
//! conditions, and analyzes pairwise human votes against those metrics.
//!
//! Module map:
//!
//! - [`filmstrip`]: frame sequences, grayscale conversion, channel histograms.
//! - [`progress`]: histogram- and SSIM-based visual completeness curves,
//!   render-start and visual-complete detection.
//! - [`indices`]: index integration, normalized differences, metric reports.
//! - [`har`]: navigation timings from HTTP Archive documents.
//! - [`pairing`]: condition buckets, pair pools, session pair sets.
//! - [`analysis`]: majority and synthetic votes, percentage match, TTC
//!   positions, random forest with k-fold cross validation.

pub mod analysis;
pub mod choice;
pub mod filmstrip;
pub mod har;
pub mod indices;
pub mod pairing;
pub mod progress;
pub mod records;

pub use choice::Choice;
pub use filmstrip::{Filmstrip, Frame};
pub use indices::MetricReport;
pub use progress::{CompletenessMethod, ProgressCurve, SsimParams};
