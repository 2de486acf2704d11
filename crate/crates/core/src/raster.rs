//! Pixel containers and the resampling primitives every other stage builds on.
//!
//! [`RasterImage`] holds 8-bit RGB, [`LumaImage`] holds real-valued luma in
//! `[0, 255]`. Resampling is separable: each axis uses area averaging when it
//! shrinks and bilinear interpolation (pixel-center aligned) when it grows.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageFormat, RgbImage};
use thiserror::Error;

/// ITU-R BT.601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("image dimensions must be at least 1x1, got {width}x{height}")]
    EmptyDimensions { width: u32, height: u32 },
    #[error("pixel count {actual} does not match {width}x{height}")]
    PixelCount {
        width: u32,
        height: u32,
        actual: usize,
    },
    #[error("luma value {0} outside [0, 255]")]
    LumaRange(f64),
    #[error("failed to decode image: {0}")]
    Decode(#[from] image::ImageError),
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Row-major 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    pixels: Vec<[u8; 3]>,
}

impl RasterImage {
    pub fn new(width: u32, height: u32, pixels: Vec<[u8; 3]>) -> Result<Self, RasterError> {
        check_dims(width, height)?;
        if pixels.len() != width as usize * height as usize {
            return Err(RasterError::PixelCount {
                width,
                height,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: u32, height: u32, color: [u8; 3]) -> Result<Self, RasterError> {
        Self::new(width, height, vec![color; width as usize * height as usize])
    }

    pub fn from_fn(
        width: u32,
        height: u32,
        mut f: impl FnMut(u32, u32) -> [u8; 3],
    ) -> Result<Self, RasterError> {
        check_dims(width, height)?;
        let mut pixels = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Decodes any format the `image` crate recognizes into 8-bit RGB.
    pub fn decode(bytes: &[u8]) -> Result<Self, RasterError> {
        let dynamic = image::load_from_memory(bytes)?;
        Self::from_dynamic(&dynamic)
    }

    /// Whether `bytes` start with the signature of a supported format.
    /// Cheap; does not validate the payload.
    pub fn looks_decodable(bytes: &[u8]) -> bool {
        image::guess_format(bytes).is_ok_and(|f| f.reading_enabled())
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self, RasterError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|source| RasterError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::decode(&bytes)
    }

    pub fn from_dynamic(img: &DynamicImage) -> Result<Self, RasterError> {
        let rgb = img.to_rgb8();
        let (width, height) = rgb.dimensions();
        let pixels = rgb.pixels().map(|p| p.0).collect();
        Self::new(width, height, pixels)
    }

    pub fn to_rgb_image(&self) -> RgbImage {
        let raw: Vec<u8> = self.pixels.iter().flat_map(|p| p.iter().copied()).collect();
        RgbImage::from_raw(self.width, self.height, raw)
            .expect("dimensions validated on construction")
    }

    /// Lossless PNG encoding.
    pub fn to_png_bytes(&self) -> Vec<u8> {
        let mut out = Cursor::new(Vec::new());
        self.to_rgb_image()
            .write_to(&mut out, ImageFormat::Png)
            .expect("in-memory PNG encoding does not fail");
        out.into_inner()
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), RasterError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_png_bytes()).map_err(|source| RasterError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixel_area(&self) -> u64 {
        self.width as u64 * self.height as u64
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    pub fn put(&mut self, x: u32, y: u32, color: [u8; 3]) {
        let w = self.width as usize;
        self.pixels[y as usize * w + x as usize] = color;
    }

    /// Copies the `w`x`h` window at `(x, y)`; the window must lie inside the image.
    pub fn crop(&self, x: u32, y: u32, w: u32, h: u32) -> Result<Self, RasterError> {
        check_dims(w, h)?;
        assert!(
            x + w <= self.width && y + h <= self.height,
            "crop window out of bounds"
        );
        Self::from_fn(w, h, |cx, cy| self.get(x + cx, y + cy))
    }
}

/// Row-major real-valued luma image, values in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LumaImage {
    width: u32,
    height: u32,
    values: Vec<f64>,
}

impl LumaImage {
    pub fn new(width: u32, height: u32, values: Vec<f64>) -> Result<Self, RasterError> {
        check_dims(width, height)?;
        if values.len() != width as usize * height as usize {
            return Err(RasterError::PixelCount {
                width,
                height,
                actual: values.len(),
            });
        }
        if let Some(bad) = values.iter().find(|v| !(0.0..=255.0).contains(*v)) {
            return Err(RasterError::LumaRange(*bad));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

fn check_dims(width: u32, height: u32) -> Result<(), RasterError> {
    if width == 0 || height == 0 {
        return Err(RasterError::EmptyDimensions { width, height });
    }
    Ok(())
}

pub fn luma_of(p: [u8; 3]) -> f64 {
    let v = LUMA_WEIGHTS[0] * p[0] as f64
        + LUMA_WEIGHTS[1] * p[1] as f64
        + LUMA_WEIGHTS[2] * p[2] as f64;
    v.clamp(0.0, 255.0)
}

pub fn to_grayscale(img: &RasterImage) -> LumaImage {
    LumaImage {
        width: img.width,
        height: img.height,
        values: img.pixels.iter().map(|&p| luma_of(p)).collect(),
    }
}

/// One output sample's contributing source indices and weights.
type Taps = Vec<(usize, f64)>;

/// Per-axis resampling taps: area averaging when shrinking, bilinear when
/// enlarging, identity when the size is unchanged.
fn axis_taps(src: u32, dst: u32) -> Vec<Taps> {
    let (src_n, dst_n) = (src as usize, dst as usize);
    if src_n == dst_n {
        return (0..dst_n).map(|i| vec![(i, 1.0)]).collect();
    }
    if dst_n < src_n {
        let scale = src as f64 / dst as f64;
        (0..dst_n)
            .map(|i| {
                let start = i as f64 * scale;
                let end = (i + 1) as f64 * scale;
                let first = start.floor() as usize;
                let last = (end.ceil() as usize).min(src_n);
                (first..last)
                    .filter_map(|j| {
                        let overlap = end.min((j + 1) as f64) - start.max(j as f64);
                        (overlap > 0.0).then_some((j, overlap / scale))
                    })
                    .collect()
            })
            .collect()
    } else {
        let scale = src as f64 / dst as f64;
        let max = (src_n - 1) as f64;
        (0..dst_n)
            .map(|i| {
                let pos = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, max);
                let left = pos.floor() as usize;
                let frac = pos - left as f64;
                if frac == 0.0 || left + 1 >= src_n {
                    vec![(left, 1.0)]
                } else {
                    vec![(left, 1.0 - frac), (left + 1, frac)]
                }
            })
            .collect()
    }
}

/// Separable resample of a planar `channels`-interleaved f64 buffer.
fn resample(
    values: &[f64],
    channels: usize,
    src_w: u32,
    src_h: u32,
    dst_w: u32,
    dst_h: u32,
) -> Vec<f64> {
    let xt = axis_taps(src_w, dst_w);
    let yt = axis_taps(src_h, dst_h);
    let (sw, dw) = (src_w as usize, dst_w as usize);

    let mut horiz = vec![0.0; dw * src_h as usize * channels];
    for y in 0..src_h as usize {
        for (x, taps) in xt.iter().enumerate() {
            for c in 0..channels {
                let mut acc = 0.0;
                for &(j, w) in taps {
                    acc += w * values[(y * sw + j) * channels + c];
                }
                horiz[(y * dw + x) * channels + c] = acc;
            }
        }
    }

    let mut out = vec![0.0; dw * dst_h as usize * channels];
    for (y, taps) in yt.iter().enumerate() {
        for x in 0..dw {
            for c in 0..channels {
                let mut acc = 0.0;
                for &(j, w) in taps {
                    acc += w * horiz[(j * dw + x) * channels + c];
                }
                out[(y * dw + x) * channels + c] = acc;
            }
        }
    }
    out
}

pub fn resize_luma(img: &LumaImage, width: u32, height: u32) -> Result<LumaImage, RasterError> {
    check_dims(width, height)?;
    let values = resample(&img.values, 1, img.width, img.height, width, height)
        .into_iter()
        .map(|v| v.clamp(0.0, 255.0))
        .collect();
    Ok(LumaImage {
        width,
        height,
        values,
    })
}

/// Resizes an RGB image with the same per-axis rules as [`resize_luma`],
/// rounding each channel back to 8 bits.
pub fn resize_rgb(img: &RasterImage, width: u32, height: u32) -> Result<RasterImage, RasterError> {
    check_dims(width, height)?;
    if width == img.width && height == img.height {
        return Ok(img.clone());
    }
    let flat: Vec<f64> = img
        .pixels
        .iter()
        .flat_map(|p| p.iter().map(|&c| c as f64))
        .collect();
    let out = resample(&flat, 3, img.width, img.height, width, height);
    let pixels = out
        .chunks_exact(3)
        .map(|c| [to_u8(c[0]), to_u8(c[1]), to_u8(c[2])])
        .collect();
    RasterImage::new(width, height, pixels)
}

pub(crate) fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn grayscale_weights() {
        assert_abs_diff_eq!(luma_of([255, 255, 255]), 255.0, epsilon = 1e-9);
        assert_abs_diff_eq!(luma_of([255, 0, 0]), 76.245, epsilon = 1e-9);
        let black = RasterImage::filled(4, 3, [0, 0, 0]).unwrap();
        assert!(to_grayscale(&black).values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_field_survives_resize() {
        let img = LumaImage::new(8, 8, vec![100.0; 64]).unwrap();
        let out = resize_luma(&img, 4, 4).unwrap();
        assert_eq!((out.width(), out.height()), (4, 4));
        for v in out.values() {
            assert_abs_diff_eq!(*v, 100.0, epsilon = 1e-9);
        }
        let up = resize_luma(&img, 13, 5).unwrap();
        for v in up.values() {
            assert_abs_diff_eq!(*v, 100.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn two_pixels_average() {
        let img = LumaImage::new(2, 1, vec![0.0, 255.0]).unwrap();
        let out = resize_luma(&img, 1, 1).unwrap();
        assert_eq!(out.values(), &[127.5]);
    }

    #[test]
    fn checkerboard_block_average() {
        let values = (0..256)
            .map(|i| {
                if (i % 16 + i / 16) % 2 == 0 {
                    255.0
                } else {
                    0.0
                }
            })
            .collect();
        let img = LumaImage::new(16, 16, values).unwrap();
        let out = resize_luma(&img, 8, 8).unwrap();
        // brute-force 2x2 block means
        for by in 0..8u32 {
            for bx in 0..8u32 {
                let mut sum = 0.0;
                for dy in 0..2 {
                    for dx in 0..2 {
                        sum += img.get(bx * 2 + dx, by * 2 + dy);
                    }
                }
                assert_abs_diff_eq!(out.get(bx, by), sum / 4.0, epsilon = 1e-12);
                assert_abs_diff_eq!(out.get(bx, by), 127.5, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn zero_target_rejected() {
        let img = LumaImage::new(2, 2, vec![0.0; 4]).unwrap();
        assert!(matches!(
            resize_luma(&img, 0, 3),
            Err(RasterError::EmptyDimensions { .. })
        ));
        assert!(resize_luma(&img, 3, 0).is_err());
    }

    #[test]
    fn bilinear_upscale_interpolates_between_neighbours() {
        let img = LumaImage::new(2, 1, vec![0.0, 100.0]).unwrap();
        let out = resize_luma(&img, 4, 1).unwrap();
        assert_eq!(out.values(), &[0.0, 25.0, 75.0, 100.0]);
    }

    #[test]
    fn invalid_construction() {
        assert!(RasterImage::new(0, 2, vec![]).is_err());
        assert!(RasterImage::new(2, 2, vec![[0; 3]; 3]).is_err());
        assert!(LumaImage::new(1, 1, vec![256.0]).is_err());
    }

    #[test]
    fn png_roundtrip_is_lossless() {
        let img = RasterImage::from_fn(7, 5, |x, y| [(x * 30) as u8, (y * 50) as u8, 9]).unwrap();
        let back = RasterImage::decode(&img.to_png_bytes()).unwrap();
        assert_eq!(img, back);
    }
}
