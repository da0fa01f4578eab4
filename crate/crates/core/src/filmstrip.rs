//! Timestamped above-the-fold frame sequences and per-frame pixel primitives.
//!
//! A [`Filmstrip`] is the frame-level stand-in for a page-load video. Frames
//! are lossless RGB rasters; the first one is captured at navigation start
//! (`t_ms = 0`) and serves as the blank reference for visual progress.
//!
//! Metric accuracy depends on the sampling rate of the strip. Any strictly
//! increasing sampling is accepted.

use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, Luma, RgbImage};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum FilmstripError {
    #[error("cannot read manifest {path}: {source}")]
    ManifestIo {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest {path}: {source}")]
    ManifestParse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("frame {index} ({file}): cannot decode image: {source}")]
    Decode {
        index: usize,
        file: String,
        #[source]
        source: image::ImageError,
    },
    #[error("frame {index}: invalid timestamp {t_ms} ms")]
    InvalidTimestamp { index: usize, t_ms: f64 },
    #[error("frame {index}: timestamp {t_ms} ms does not increase over previous {prev_ms} ms")]
    NonIncreasing { index: usize, prev_ms: u64, t_ms: u64 },
    #[error("first frame must be at t = 0 ms, found {t_ms} ms")]
    FirstNotAtZero { t_ms: u64 },
    #[error("frame {index}: dimensions {got:?} differ from first frame {expected:?}")]
    DimensionMismatch { index: usize, expected: (u32, u32), got: (u32, u32) },
    #[error("frame {index}: empty raster")]
    EmptyFrame { index: usize },
    #[error("filmstrip needs at least 2 frames, found {count}")]
    TooFewFrames { count: usize },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot encode frame {index}: {source}")]
    Encode {
        index: usize,
        #[source]
        source: image::ImageError,
    },
}

/// One captured ATF frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    /// Milliseconds since navigation start.
    pub t_ms: u64,
    pub pixels: RgbImage,
}

impl Frame {
    pub fn new(t_ms: u64, pixels: RgbImage) -> Self {
        Frame { t_ms, pixels }
    }

    /// A frame filled with a single color.
    pub fn solid(t_ms: u64, width: u32, height: u32, rgb: [u8; 3]) -> Self {
        Frame::new(t_ms, RgbImage::from_pixel(width, height, image::Rgb(rgb)))
    }

    pub fn dimensions(&self) -> (u32, u32) {
        self.pixels.dimensions()
    }

    pub fn pixel_count(&self) -> u64 {
        let (w, h) = self.dimensions();
        u64::from(w) * u64::from(h)
    }
}

/// Ordered frames of one page load. Immutable once constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct Filmstrip {
    source_id: String,
    frames: Vec<Frame>,
}

impl Filmstrip {
    /// Validates the strip invariants: at least two frames, first at 0 ms,
    /// strictly increasing timestamps and uniform non-empty dimensions.
    pub fn new(source_id: impl Into<String>, frames: Vec<Frame>) -> Result<Self, FilmstripError> {
        if frames.len() < 2 {
            return Err(FilmstripError::TooFewFrames { count: frames.len() });
        }
        let expected = frames[0].dimensions();
        for (index, frame) in frames.iter().enumerate() {
            let dims = frame.dimensions();
            if dims.0 == 0 || dims.1 == 0 {
                return Err(FilmstripError::EmptyFrame { index });
            }
            if dims != expected {
                return Err(FilmstripError::DimensionMismatch { index, expected, got: dims });
            }
            if index == 0 {
                if frame.t_ms != 0 {
                    return Err(FilmstripError::FirstNotAtZero { t_ms: frame.t_ms });
                }
            } else {
                let prev_ms = frames[index - 1].t_ms;
                if frame.t_ms <= prev_ms {
                    return Err(FilmstripError::NonIncreasing { index, prev_ms, t_ms: frame.t_ms });
                }
            }
        }
        Ok(Filmstrip { source_id: source_id.into(), frames })
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn first(&self) -> &Frame {
        &self.frames[0]
    }

    pub fn last(&self) -> &Frame {
        self.frames.last().expect("filmstrip has at least two frames")
    }

    pub fn timestamps(&self) -> Vec<u64> {
        self.frames.iter().map(|f| f.t_ms).collect()
    }

    pub fn dimensions(&self) -> (u32, u32) {
        self.frames[0].dimensions()
    }
}

/// On-disk manifest: `{"source_id": .., "frames": [{"t_ms": .., "file": ..}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub source_id: String,
    pub frames: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Integer milliseconds on write; fractional values are accepted on read
    /// and rounded half-up.
    pub t_ms: f64,
    /// Path relative to the manifest's directory.
    pub file: String,
}

fn round_timestamp(index: usize, t_ms: f64) -> Result<u64, FilmstripError> {
    if !t_ms.is_finite() || t_ms < 0.0 {
        return Err(FilmstripError::InvalidTimestamp { index, t_ms });
    }
    Ok((t_ms + 0.5).floor() as u64)
}

pub fn read_manifest(path: &Path) -> Result<Manifest, FilmstripError> {
    let bytes = fs::read(path).map_err(|source| FilmstripError::ManifestIo { path: path.to_path_buf(), source })?;
    serde_json::from_slice(&bytes).map_err(|source| FilmstripError::ManifestParse { path: path.to_path_buf(), source })
}

/// Loads a filmstrip from a JSON manifest and the PNG frames it references.
pub fn load_filmstrip(manifest_path: &Path) -> Result<Filmstrip, FilmstripError> {
    let manifest = read_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut frames = Vec::with_capacity(manifest.frames.len());
    for (index, entry) in manifest.frames.iter().enumerate() {
        let t_ms = round_timestamp(index, entry.t_ms)?;
        // Reject ordering problems before paying for decoding.
        if let Some(prev) = frames.last().map(|f: &Frame| f.t_ms) {
            if t_ms <= prev {
                return Err(FilmstripError::NonIncreasing { index, prev_ms: prev, t_ms });
            }
        }
        let img = image::open(base.join(&entry.file)).map_err(|source| FilmstripError::Decode {
            index,
            file: entry.file.clone(),
            source,
        })?;
        frames.push(Frame::new(t_ms, img.to_rgb8()));
    }
    Filmstrip::new(manifest.source_id, frames)
}

/// Writes every frame as `frame_NNNN.png` plus `manifest.json` into `dir`.
/// Returns the manifest path.
pub fn save_filmstrip(strip: &Filmstrip, dir: &Path) -> Result<PathBuf, FilmstripError> {
    fs::create_dir_all(dir).map_err(|source| FilmstripError::Write { path: dir.to_path_buf(), source })?;
    let mut entries = Vec::with_capacity(strip.frames.len());
    for (index, frame) in strip.frames.iter().enumerate() {
        let file = format!("frame_{index:04}.png");
        frame
            .pixels
            .save_with_format(dir.join(&file), image::ImageFormat::Png)
            .map_err(|source| FilmstripError::Encode { index, source })?;
        entries.push(ManifestEntry { t_ms: frame.t_ms as f64, file });
    }
    let manifest = Manifest { source_id: strip.source_id.clone(), frames: entries };
    let path = dir.join("manifest.json");
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, json).map_err(|source| FilmstripError::Write { path: path.clone(), source })?;
    Ok(path)
}

/// BT.601 luma, `round(0.299 R + 0.587 G + 0.114 B)`, computed in integer
/// arithmetic so that gray input maps to itself exactly.
pub fn to_grayscale(frame: &Frame) -> GrayImage {
    let (w, h) = frame.dimensions();
    GrayImage::from_fn(w, h, |x, y| {
        let [r, g, b] = frame.pixels.get_pixel(x, y).0;
        let weighted = 299 * u32::from(r) + 587 * u32::from(g) + 114 * u32::from(b);
        Luma([((weighted + 500) / 1000) as u8])
    })
}

/// Per-channel counts of 8-bit values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram {
    pub bins: [[u32; 256]; 3],
}

impl Histogram {
    pub fn channel_sum(&self, channel: usize) -> u64 {
        self.bins[channel].iter().map(|&c| u64::from(c)).sum()
    }

    /// Sum over channels and bins of absolute count differences.
    pub fn l1_distance(&self, other: &Histogram) -> u64 {
        self.bins
            .iter()
            .zip(other.bins.iter())
            .flat_map(|(a, b)| a.iter().zip(b.iter()))
            .map(|(&x, &y)| u64::from(x.abs_diff(y)))
            .sum()
    }
}

pub fn histogram(frame: &Frame) -> Histogram {
    let mut bins = [[0u32; 256]; 3];
    for px in frame.pixels.pixels() {
        for (c, &v) in px.0.iter().enumerate() {
            bins[c][v as usize] += 1;
        }
    }
    Histogram { bins }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write_png(dir: &Path, name: &str, rgb: [u8; 3], w: u32, h: u32) {
        RgbImage::from_pixel(w, h, image::Rgb(rgb)).save(dir.join(name)).unwrap();
    }

    fn write_manifest(dir: &Path, entries: &[(f64, &str)]) -> PathBuf {
        let m = Manifest {
            source_id: "page-a".into(),
            frames: entries.iter().map(|&(t_ms, f)| ManifestEntry { t_ms, file: f.into() }).collect(),
        };
        let path = dir.join("manifest.json");
        fs::write(&path, serde_json::to_vec(&m).unwrap()).unwrap();
        path
    }

    #[test]
    fn loads_three_frames_in_order() {
        let dir = tempfile::tempdir().unwrap();
        for (i, c) in [[255u8; 3], [128; 3], [0; 3]].iter().enumerate() {
            write_png(dir.path(), &format!("{i}.png"), *c, 4, 3);
        }
        let path = write_manifest(dir.path(), &[(0.0, "0.png"), (500.0, "1.png"), (1000.0, "2.png")]);
        let strip = load_filmstrip(&path).unwrap();
        assert_eq!(strip.timestamps(), vec![0, 500, 1000]);
        assert_eq!(strip.source_id(), "page-a");
        assert_eq!(strip.dimensions(), (4, 3));
    }

    #[test]
    fn rejects_repeated_timestamp() {
        let dir = tempfile::tempdir().unwrap();
        write_png(dir.path(), "a.png", [0; 3], 2, 2);
        let path = write_manifest(dir.path(), &[(0.0, "a.png"), (500.0, "a.png"), (500.0, "a.png")]);
        match load_filmstrip(&path) {
            Err(FilmstripError::NonIncreasing { index: 2, prev_ms: 500, t_ms: 500 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_single_frame() {
        let dir = tempfile::tempdir().unwrap();
        write_png(dir.path(), "a.png", [0; 3], 2, 2);
        let path = write_manifest(dir.path(), &[(0.0, "a.png")]);
        assert!(matches!(load_filmstrip(&path), Err(FilmstripError::TooFewFrames { count: 1 })));
    }

    #[test]
    fn rejects_mismatched_dimensions_and_bad_files() {
        let dir = tempfile::tempdir().unwrap();
        write_png(dir.path(), "a.png", [0; 3], 2, 2);
        write_png(dir.path(), "b.png", [0; 3], 3, 2);
        fs::write(dir.path().join("junk.png"), b"not a png").unwrap();
        let path = write_manifest(dir.path(), &[(0.0, "a.png"), (100.0, "b.png")]);
        assert!(matches!(
            load_filmstrip(&path),
            Err(FilmstripError::DimensionMismatch { index: 1, expected: (2, 2), got: (3, 2) })
        ));
        let path = write_manifest(dir.path(), &[(0.0, "a.png"), (100.0, "junk.png")]);
        assert!(matches!(load_filmstrip(&path), Err(FilmstripError::Decode { index: 1, .. })));
        let path = write_manifest(dir.path(), &[(0.0, "a.png"), (100.0, "missing.png")]);
        assert!(matches!(load_filmstrip(&path), Err(FilmstripError::Decode { index: 1, .. })));
        assert!(matches!(load_filmstrip(&dir.path().join("nope.json")), Err(FilmstripError::ManifestIo { .. })));
        fs::write(dir.path().join("bad.json"), b"{").unwrap();
        assert!(matches!(load_filmstrip(&dir.path().join("bad.json")), Err(FilmstripError::ManifestParse { .. })));
    }

    #[test]
    fn first_frame_must_be_zero_and_fractions_round_half_up() {
        let dir = tempfile::tempdir().unwrap();
        write_png(dir.path(), "a.png", [0; 3], 2, 2);
        let path = write_manifest(dir.path(), &[(3.0, "a.png"), (100.0, "a.png")]);
        assert!(matches!(load_filmstrip(&path), Err(FilmstripError::FirstNotAtZero { t_ms: 3 })));
        let path = write_manifest(dir.path(), &[(0.4, "a.png"), (99.5, "a.png"), (100.49, "a.png")]);
        // 100.49 rounds to 100, equal to the rounded 99.5.
        assert!(matches!(load_filmstrip(&path), Err(FilmstripError::NonIncreasing { index: 2, .. })));
        let path = write_manifest(dir.path(), &[(0.4, "a.png"), (99.5, "a.png")]);
        assert_eq!(load_filmstrip(&path).unwrap().timestamps(), vec![0, 100]);
        let path = write_manifest(dir.path(), &[(0.0, "a.png"), (-5.0, "a.png")]);
        assert!(matches!(load_filmstrip(&path), Err(FilmstripError::InvalidTimestamp { index: 1, .. })));
    }

    #[test]
    fn alpha_channel_is_ignored() {
        let dir = tempfile::tempdir().unwrap();
        image::RgbaImage::from_pixel(2, 2, image::Rgba([10, 20, 30, 0])).save(dir.path().join("a.png")).unwrap();
        let path = write_manifest(dir.path(), &[(0.0, "a.png"), (10.0, "a.png")]);
        let strip = load_filmstrip(&path).unwrap();
        assert_eq!(strip.first().pixels.get_pixel(1, 1).0, [10, 20, 30]);
    }

    #[test]
    fn save_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = RgbImage::new(5, 4);
        for (i, px) in img.pixels_mut().enumerate() {
            *px = image::Rgb([(i * 7) as u8, (i * 13) as u8, (i * 29) as u8]);
        }
        let strip = Filmstrip::new("rt", vec![Frame::solid(0, 5, 4, [255; 3]), Frame::new(250, img)]).unwrap();
        let path = save_filmstrip(&strip, dir.path()).unwrap();
        let again = load_filmstrip(&path).unwrap();
        assert_eq!(again, strip);
        let manifest = read_manifest(&path).unwrap();
        let path2 = save_filmstrip(&again, &dir.path().join("second")).unwrap();
        assert_eq!(read_manifest(&path2).unwrap(), manifest);
    }

    #[test]
    fn grayscale_reference_values() {
        let black = to_grayscale(&Frame::solid(0, 3, 2, [0, 0, 0]));
        assert!(black.pixels().all(|p| p.0[0] == 0));
        let white = to_grayscale(&Frame::solid(0, 3, 2, [255, 255, 255]));
        assert!(white.pixels().all(|p| p.0[0] == 255));
        let red = to_grayscale(&Frame::solid(0, 3, 2, [255, 0, 0]));
        assert!(red.pixels().all(|p| p.0[0] == 76));
    }

    #[test]
    fn histogram_reference_values() {
        let h = histogram(&Frame::solid(0, 10, 10, [0, 0, 0]));
        for c in 0..3 {
            assert_eq!(h.bins[c][0], 100);
            assert_eq!(h.channel_sum(c), 100);
        }
        let h = histogram(&Frame::solid(0, 10, 10, [255, 255, 255]));
        for c in 0..3 {
            assert_eq!(h.bins[c][255], 100);
            assert_eq!(h.channel_sum(c), 100);
        }
        let mut img = RgbImage::new(2, 1);
        img.put_pixel(1, 0, image::Rgb([255, 255, 255]));
        let h = histogram(&Frame::new(0, img));
        for c in 0..3 {
            assert_eq!(h.bins[c][0], 1);
            assert_eq!(h.bins[c][255], 1);
            assert_eq!(h.channel_sum(c), 2);
        }
    }

    proptest! {
        #[test]
        fn histogram_sums_equal_pixel_count(w in 1u32..12, h in 1u32..12, seed in any::<u64>()) {
            let mut state = seed;
            let img = RgbImage::from_fn(w, h, |_, _| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let b = state.to_le_bytes();
                image::Rgb([b[5], b[6], b[7]])
            });
            let frame = Frame::new(0, img);
            let hist = histogram(&frame);
            for c in 0..3 {
                prop_assert_eq!(hist.channel_sum(c), frame.pixel_count());
            }
        }

        #[test]
        fn grayscale_fixes_gray_pixels(v in any::<u8>()) {
            let g = to_grayscale(&Frame::solid(0, 2, 2, [v, v, v]));
            prop_assert!(g.pixels().all(|p| p.0[0] == v));
        }
    }
}
