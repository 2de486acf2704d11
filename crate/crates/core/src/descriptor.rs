//! Compact image signatures: four 64-bit hashes and a normalized HSV histogram.
//!
//! All hashes share one bit layout: bit `b = row * 8 + col` of the 8x8
//! decision grid is stored most-significant-first, so the hex rendering reads
//! the grid row by row. Threshold comparisons use a small absolute tolerance
//! ([`TIE_EPSILON`]) so that resampling round-off on flat regions never
//! produces spurious one-bits.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{resize_luma, to_grayscale, LumaImage, RasterImage};

/// A value must exceed its reference by more than this to set a bit.
pub const TIE_EPSILON: f64 = 1e-9;

/// Regularizer in the chi-square denominator.
pub const CHI_SQUARE_EPSILON: f64 = 1e-10;

pub const HUE_BINS: usize = 8;
pub const SATURATION_BINS: usize = 8;
pub const VALUE_BINS: usize = 8;
pub const HISTOGRAM_BINS: usize = HUE_BINS * SATURATION_BINS * VALUE_BINS;

/// Side of the luma thumbnail kept for the raw-cosine baseline.
pub const THUMBNAIL_SIDE: u32 = 64;

#[derive(Debug, Error)]
pub enum DescriptorError {
    #[error("invalid hash rendering {0:?}: expected 16 lowercase hex characters")]
    HashFormat(String),
    #[error("histogram must have {HISTOGRAM_BINS} bins, got {0}")]
    HistogramLength(usize),
    #[error("histogram bin {index} is invalid ({value})")]
    HistogramValue { index: usize, value: f64 },
    #[error("descriptor dimensions must be positive")]
    Dimensions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct BitHash64(pub u64);

impl BitHash64 {
    pub const ZERO: BitHash64 = BitHash64(0);

    /// Packs 64 decisions given in grid order (bit 0 first) MSB-first.
    pub fn from_bits(bits: impl IntoIterator<Item = bool>) -> Self {
        let mut value = 0u64;
        let mut count = 0;
        for bit in bits {
            assert!(count < 64, "more than 64 bits supplied");
            value = (value << 1) | bit as u64;
            count += 1;
        }
        assert_eq!(count, 64, "a hash needs exactly 64 bits");
        BitHash64(value)
    }

    /// Decision for grid cell `b = row * 8 + col`.
    pub fn bit(&self, b: usize) -> bool {
        assert!(b < 64);
        (self.0 >> (63 - b)) & 1 == 1
    }

    pub fn count_ones(&self) -> u32 {
        self.0.count_ones()
    }

    pub fn to_hex(&self) -> String {
        format!("{:016x}", self.0)
    }
}

impl fmt::Display for BitHash64 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl FromStr for BitHash64 {
    type Err = DescriptorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let valid = s.len() == 16
            && s.bytes()
                .all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b));
        if !valid {
            return Err(DescriptorError::HashFormat(s.to_string()));
        }
        u64::from_str_radix(s, 16)
            .map(BitHash64)
            .map_err(|_| DescriptorError::HashFormat(s.to_string()))
    }
}

impl Serialize for BitHash64 {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for BitHash64 {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Number of differing bit positions.
pub fn hamming(a: BitHash64, b: BitHash64) -> u32 {
    (a.0 ^ b.0).count_ones()
}

fn reduced_luma(img: &RasterImage, w: u32, h: u32) -> LumaImage {
    resize_luma(&to_grayscale(img), w, h).expect("hash grid sizes are non-zero")
}

/// Mean-threshold hash on an 8x8 reduction.
pub fn average_hash(img: &RasterImage) -> BitHash64 {
    let small = reduced_luma(img, 8, 8);
    let mean = small.mean();
    BitHash64::from_bits(small.values().iter().map(|&v| v > mean + TIE_EPSILON))
}

/// Orthonormal DCT-II basis rows `0..keep` for a signal of length `n`.
fn dct_basis(n: usize, keep: usize) -> Vec<Vec<f64>> {
    (0..keep)
        .map(|u| {
            let scale = if u == 0 {
                (1.0 / n as f64).sqrt()
            } else {
                (2.0 / n as f64).sqrt()
            };
            (0..n)
                .map(|x| {
                    scale
                        * (std::f64::consts::PI * (2 * x + 1) as f64 * u as f64 / (2 * n) as f64)
                            .cos()
                })
                .collect()
        })
        .collect()
}

/// Low-frequency `keep`x`keep` block of the 2-D DCT-II of a square luma grid.
pub(crate) fn dct_low_block(values: &[f64], n: usize, keep: usize) -> Vec<f64> {
    let basis = dct_basis(n, keep);
    // rows first: tmp[y][u] = sum_x f(x, y) * basis[u][x]
    let mut tmp = vec![0.0; n * keep];
    for y in 0..n {
        let row = &values[y * n..(y + 1) * n];
        for (u, b) in basis.iter().enumerate() {
            tmp[y * keep + u] = row.iter().zip(b).map(|(f, c)| f * c).sum();
        }
    }
    let mut out = vec![0.0; keep * keep];
    for v in 0..keep {
        for u in 0..keep {
            out[v * keep + u] = (0..n).map(|y| tmp[y * keep + u] * basis[v][y]).sum();
        }
    }
    out
}

/// DCT hash: 32x32 reduction, top-left 8x8 coefficients against the mean of
/// the 63 AC terms. The DC bit is always 0.
pub fn perceptual_hash(img: &RasterImage) -> BitHash64 {
    let small = reduced_luma(img, 32, 32);
    let coeffs = dct_low_block(small.values(), 32, 8);
    let ac_mean = coeffs[1..].iter().sum::<f64>() / 63.0;
    BitHash64::from_bits(
        coeffs
            .iter()
            .enumerate()
            .map(|(i, &c)| i != 0 && c > ac_mean + TIE_EPSILON),
    )
}

/// 3x3 sharpening on luma with edge replication, clamped to `[0, 255]`.
pub fn sharpen_luma(img: &LumaImage) -> LumaImage {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let at = |x: i64, y: i64| img.get(x.clamp(0, w - 1) as u32, y.clamp(0, h - 1) as u32);
    let mut values = Vec::with_capacity((w * h) as usize);
    for y in 0..h {
        for x in 0..w {
            let v = 5.0 * at(x, y) - at(x - 1, y) - at(x + 1, y) - at(x, y - 1) - at(x, y + 1);
            values.push(v.clamp(0.0, 255.0));
        }
    }
    LumaImage::new(img.width(), img.height(), values).expect("same dimensions, clamped values")
}

/// Horizontal-gradient hash on a 9x8 reduction, optionally after sharpening.
pub fn difference_hash(img: &RasterImage, edge_enhance: bool) -> BitHash64 {
    let mut luma = to_grayscale(img);
    if edge_enhance {
        luma = sharpen_luma(&luma);
    }
    let small = resize_luma(&luma, 9, 8).expect("non-zero grid");
    BitHash64::from_bits((0..8u32).flat_map(|row| {
        let small = &small;
        (0..8u32).map(move |col| small.get(col + 1, row) > small.get(col, row) + TIE_EPSILON)
    }))
}

/// One level of the orthonormal 2-D Haar transform, returning only the
/// approximation (LL) band.
fn haar_approximation(values: &[f64], n: usize) -> Vec<f64> {
    let half = n / 2;
    let mut out = vec![0.0; half * half];
    for y in 0..half {
        for x in 0..half {
            let a = values[(2 * y) * n + 2 * x];
            let b = values[(2 * y) * n + 2 * x + 1];
            let c = values[(2 * y + 1) * n + 2 * x];
            let d = values[(2 * y + 1) * n + 2 * x + 1];
            out[y * half + x] = (a + b + c + d) / 2.0;
        }
    }
    out
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Haar wavelet hash: 64x64 reduction, three levels, 8x8 approximation band
/// against its median.
pub fn wavelet_hash(img: &RasterImage) -> BitHash64 {
    let small = reduced_luma(img, 64, 64);
    let mut band = small.values().to_vec();
    let mut n = 64;
    for _ in 0..3 {
        band = haar_approximation(&band, n);
        n /= 2;
    }
    let med = median(&band);
    BitHash64::from_bits(band.iter().map(|&c| c > med + TIE_EPSILON))
}

/// `(h, s, v)` with `h` in `[0, 360)` and `s, v` in `[0, 1]`.
pub fn rgb_to_hsv(p: [u8; 3]) -> (f64, f64, f64) {
    let r = p[0] as f64 / 255.0;
    let g = p[1] as f64 / 255.0;
    let b = p[2] as f64 / 255.0;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let hue = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    let hue = if hue >= 360.0 { hue - 360.0 } else { hue };
    let sat = if max == 0.0 { 0.0 } else { delta / max };
    (hue, sat, max)
}

/// Flattened h-major bin index for an HSV triple.
pub fn hsv_bin(h: f64, s: f64, v: f64) -> usize {
    let hb = ((h / 360.0 * HUE_BINS as f64) as usize).min(HUE_BINS - 1);
    let sb = ((s * SATURATION_BINS as f64) as usize).min(SATURATION_BINS - 1);
    let vb = ((v * VALUE_BINS as f64) as usize).min(VALUE_BINS - 1);
    (hb * SATURATION_BINS + sb) * VALUE_BINS + vb
}

/// 8x8x8 HSV histogram normalized to unit mass.
#[derive(Debug, Clone, PartialEq)]
pub struct HsvHistogram {
    bins: Vec<f64>,
}

impl HsvHistogram {
    /// Accepts already-normalized bins.
    pub fn from_bins(bins: Vec<f64>) -> Result<Self, DescriptorError> {
        if bins.len() != HISTOGRAM_BINS {
            return Err(DescriptorError::HistogramLength(bins.len()));
        }
        if let Some((index, &value)) = bins
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(DescriptorError::HistogramValue { index, value });
        }
        Ok(Self { bins })
    }

    pub fn bins(&self) -> &[f64] {
        &self.bins
    }

    pub fn mass(&self) -> f64 {
        self.bins.iter().sum()
    }
}

pub fn hsv_histogram(img: &RasterImage) -> HsvHistogram {
    let mut counts = vec![0u64; HISTOGRAM_BINS];
    for &p in img.pixels() {
        let (h, s, v) = rgb_to_hsv(p);
        counts[hsv_bin(h, s, v)] += 1;
    }
    let total = img.pixels().len() as f64;
    HsvHistogram {
        bins: counts.into_iter().map(|c| c as f64 / total).collect(),
    }
}

pub fn chi_square(a: &HsvHistogram, b: &HsvHistogram) -> f64 {
    a.bins
        .iter()
        .zip(&b.bins)
        .map(|(x, y)| {
            let d = x - y;
            d * d / (x + y + CHI_SQUARE_EPSILON)
        })
        .sum()
}

/// Options that change descriptor contents; descriptors are only comparable
/// when computed with equal options.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DescriptorOptions {
    pub edge_enhance_dhash: bool,
}

impl Default for DescriptorOptions {
    fn default() -> Self {
        Self {
            edge_enhance_dhash: true,
        }
    }
}

/// Flattened 64x64 luma reduction, used only by the raw-cosine baseline.
#[derive(Debug, Clone)]
pub struct Thumbnail(Arc<[f64]>);

impl Thumbnail {
    pub fn of(img: &RasterImage) -> Self {
        Thumbnail(
            reduced_luma(img, THUMBNAIL_SIDE, THUMBNAIL_SIDE)
                .values()
                .into(),
        )
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(into = "DescriptorRecord", try_from = "DescriptorRecord")]
pub struct ImageDescriptor {
    pub ahash: BitHash64,
    pub phash: BitHash64,
    pub dhash: BitHash64,
    pub whash: BitHash64,
    pub histogram: HsvHistogram,
    pub width: u32,
    pub height: u32,
    /// Not part of the serialized record.
    pub thumbnail: Option<Thumbnail>,
}

impl PartialEq for ImageDescriptor {
    fn eq(&self, other: &Self) -> bool {
        self.ahash == other.ahash
            && self.phash == other.phash
            && self.dhash == other.dhash
            && self.whash == other.whash
            && self.histogram == other.histogram
            && self.width == other.width
            && self.height == other.height
    }
}

impl ImageDescriptor {
    pub fn pixel_area(&self) -> u64 {
        self.width as u64 * self.height as u64
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("descriptor records always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Wire form of [`ImageDescriptor`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DescriptorRecord {
    pub ahash: BitHash64,
    pub phash: BitHash64,
    pub dhash: BitHash64,
    pub whash: BitHash64,
    pub hist: Vec<f64>,
    pub width: u32,
    pub height: u32,
}

impl From<ImageDescriptor> for DescriptorRecord {
    fn from(d: ImageDescriptor) -> Self {
        DescriptorRecord {
            ahash: d.ahash,
            phash: d.phash,
            dhash: d.dhash,
            whash: d.whash,
            hist: d.histogram.bins,
            width: d.width,
            height: d.height,
        }
    }
}

impl TryFrom<DescriptorRecord> for ImageDescriptor {
    type Error = DescriptorError;

    fn try_from(r: DescriptorRecord) -> Result<Self, Self::Error> {
        if r.width == 0 || r.height == 0 {
            return Err(DescriptorError::Dimensions);
        }
        Ok(ImageDescriptor {
            ahash: r.ahash,
            phash: r.phash,
            dhash: r.dhash,
            whash: r.whash,
            histogram: HsvHistogram::from_bins(r.hist)?,
            width: r.width,
            height: r.height,
            thumbnail: None,
        })
    }
}

pub fn compute_descriptor(img: &RasterImage) -> ImageDescriptor {
    compute_descriptor_with(img, DescriptorOptions::default())
}

pub fn compute_descriptor_with(img: &RasterImage, options: DescriptorOptions) -> ImageDescriptor {
    ImageDescriptor {
        ahash: average_hash(img),
        phash: perceptual_hash(img),
        dhash: difference_hash(img, options.edge_enhance_dhash),
        whash: wavelet_hash(img),
        histogram: hsv_histogram(img),
        width: img.width(),
        height: img.height(),
        thumbnail: Some(Thumbnail::of(img)),
    }
}
