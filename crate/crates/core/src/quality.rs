//! Heuristic quality checks, a host for learned classifier plugins, and the
//! augmentation generators used to build blurry / over-padded training sets.

use std::collections::VecDeque;
use std::io::Write;
use std::process::{Command, Stdio};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{resize_rgb, to_grayscale, LumaImage, RasterError, RasterImage};

/// Per-channel tolerance when flood-filling the border color.
pub const BACKGROUND_TOLERANCE: u8 = 12;

/// Label a plugin returns to flag an image.
pub const NON_COMPLIANT: &str = "non_compliant";

#[derive(Debug, Error)]
pub enum QualityError {
    #[error("image is {0}x{1}; the Laplacian needs at least 3x3")]
    TooSmall(u32, u32),
    #[error("crop fraction {0} outside (0, 1]")]
    CropFraction(f64),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QualityConfig {
    pub blur_variance_threshold: f64,
    pub background_ratio_threshold: f64,
    pub min_resolution: u32,
    /// Confidence at or above which a `non_compliant` plugin label fails the image.
    pub plugin_cutoff: f64,
}

impl Default for QualityConfig {
    fn default() -> Self {
        Self {
            blur_variance_threshold: 100.0,
            background_ratio_threshold: 0.90,
            min_resolution: 200,
            plugin_cutoff: 0.5,
        }
    }
}

impl QualityConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.blur_variance_threshold > 0.0) {
            return Err("blur_variance_threshold must be positive".into());
        }
        if !(self.background_ratio_threshold > 0.0 && self.background_ratio_threshold <= 1.0) {
            return Err("background_ratio_threshold must lie in (0, 1]".into());
        }
        if self.min_resolution == 0 {
            return Err("min_resolution must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.plugin_cutoff) {
            return Err("plugin_cutoff must lie in [0, 1]".into());
        }
        Ok(())
    }
}

/// Variance of the 4-neighbour Laplacian over interior pixels.
pub fn laplacian_variance(img: &LumaImage) -> Result<f64, QualityError> {
    let (w, h) = (img.width(), img.height());
    if w < 3 || h < 3 {
        return Err(QualityError::TooSmall(w, h));
    }
    let v = img.values();
    let stride = w as usize;
    let n = ((w - 2) * (h - 2)) as f64;
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for y in 1..h as usize - 1 {
        for x in 1..w as usize - 1 {
            let i = y * stride + x;
            let lap = v[i - 1] + v[i + 1] + v[i - stride] + v[i + stride] - 4.0 * v[i];
            sum += lap;
            sum_sq += lap * lap;
        }
    }
    let mean = sum / n;
    Ok((sum_sq / n - mean * mean).max(0.0))
}

/// Most frequent border color; ties go to the smallest RGB triple.
pub fn dominant_border_color(img: &RasterImage) -> [u8; 3] {
    let (w, h) = (img.width(), img.height());
    let mut counts = std::collections::HashMap::<[u8; 3], usize>::new();
    for x in 0..w {
        *counts.entry(img.get(x, 0)).or_default() += 1;
        if h > 1 {
            *counts.entry(img.get(x, h - 1)).or_default() += 1;
        }
    }
    for y in 1..h.saturating_sub(1) {
        *counts.entry(img.get(0, y)).or_default() += 1;
        if w > 1 {
            *counts.entry(img.get(w - 1, y)).or_default() += 1;
        }
    }
    counts
        .into_iter()
        .max_by(|(ca, na), (cb, nb)| na.cmp(nb).then(cb.cmp(ca)))
        .map(|(c, _)| c)
        .expect("images have at least one border pixel")
}

fn within_tolerance(p: [u8; 3], reference: [u8; 3]) -> bool {
    p.iter()
        .zip(reference)
        .all(|(&a, b)| a.abs_diff(b) <= BACKGROUND_TOLERANCE)
}

/// Fraction of pixels reachable (4-connected) from the border through pixels
/// close to the dominant border color.
pub fn background_ratio(img: &RasterImage) -> f64 {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let reference = dominant_border_color(img);
    let mut filled = vec![false; w * h];
    let mut queue = VecDeque::new();
    let seed =
        |x: usize, y: usize, filled: &mut Vec<bool>, queue: &mut VecDeque<(usize, usize)>| {
            let i = y * w + x;
            if !filled[i] && within_tolerance(img.pixels()[i], reference) {
                filled[i] = true;
                queue.push_back((x, y));
            }
        };
    for x in 0..w {
        seed(x, 0, &mut filled, &mut queue);
        seed(x, h - 1, &mut filled, &mut queue);
    }
    for y in 0..h {
        seed(0, y, &mut filled, &mut queue);
        seed(w - 1, y, &mut filled, &mut queue);
    }
    let mut count = queue.len();
    while let Some((x, y)) = queue.pop_front() {
        let mut visit = |nx: usize, ny: usize| {
            let i = ny * w + nx;
            if !filled[i] && within_tolerance(img.pixels()[i], reference) {
                filled[i] = true;
                count += 1;
                queue.push_back((nx, ny));
            }
        };
        if x > 0 {
            visit(x - 1, y);
        }
        if x + 1 < w {
            visit(x + 1, y);
        }
        if y > 0 {
            visit(x, y - 1);
        }
        if y + 1 < h {
            visit(x, y + 1);
        }
    }
    count as f64 / (w * h) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: String,
    pub confidence: f64,
}

#[derive(Debug, Error)]
#[error("plugin {plugin}: {message}")]
pub struct PluginError {
    pub plugin: String,
    pub message: String,
}

/// A learned scorer for one image. Implementations that cannot be called
/// concurrently report `reentrant() == false` and the host serializes them.
pub trait ClassifierPlugin: Send + Sync {
    fn name(&self) -> &str;
    fn predict(&self, img: &RasterImage) -> Result<Prediction, PluginError>;
    fn reentrant(&self) -> bool {
        true
    }
}

struct HostedPlugin {
    plugin: Arc<dyn ClassifierPlugin>,
    gate: Option<Mutex<()>>,
}

#[derive(Default)]
pub struct PluginHost {
    plugins: Vec<HostedPlugin>,
}

impl PluginHost {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, plugin: Arc<dyn ClassifierPlugin>) -> Self {
        self.add(plugin);
        self
    }

    pub fn add(&mut self, plugin: Arc<dyn ClassifierPlugin>) {
        let gate = (!plugin.reentrant()).then(|| Mutex::new(()));
        self.plugins.push(HostedPlugin { plugin, gate });
    }

    pub fn len(&self) -> usize {
        self.plugins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.plugins.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.plugins
            .iter()
            .map(|p| p.plugin.name().to_string())
            .collect()
    }

    fn run(&self, img: &RasterImage) -> Vec<(String, Result<Prediction, PluginError>)> {
        self.plugins
            .iter()
            .map(|hosted| {
                let _guard = hosted
                    .gate
                    .as_ref()
                    .map(|m| m.lock().unwrap_or_else(|e| e.into_inner()));
                let name = hosted.plugin.name().to_string();
                let result = hosted.plugin.predict(img).and_then(|p| {
                    if (0.0..=1.0).contains(&p.confidence) {
                        Ok(p)
                    } else {
                        Err(PluginError {
                            plugin: name.clone(),
                            message: format!("confidence {} outside [0, 1]", p.confidence),
                        })
                    }
                });
                (name, result)
            })
            .collect()
    }
}

impl std::fmt::Debug for PluginHost {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.names()).finish()
    }
}

/// Scores images by piping PNG bytes to an external command that answers
/// with a `{"label": .., "confidence": ..}` JSON object on stdout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessPlugin {
    pub name: String,
    pub command: Vec<String>,
    #[serde(default)]
    pub reentrant: bool,
}

impl ClassifierPlugin for ProcessPlugin {
    fn name(&self) -> &str {
        &self.name
    }

    fn reentrant(&self) -> bool {
        self.reentrant
    }

    fn predict(&self, img: &RasterImage) -> Result<Prediction, PluginError> {
        let fail = |message: String| PluginError {
            plugin: self.name.clone(),
            message,
        };
        let (program, args) = self
            .command
            .split_first()
            .ok_or_else(|| fail("empty command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| fail(format!("spawn failed: {e}")))?;
        let png = img.to_png_bytes();
        if let Some(mut stdin) = child.stdin.take() {
            stdin
                .write_all(&png)
                .map_err(|e| fail(format!("write failed: {e}")))?;
        }
        let output = child
            .wait_with_output()
            .map_err(|e| fail(format!("wait failed: {e}")))?;
        if !output.status.success() {
            return Err(fail(format!("exited with {}", output.status)));
        }
        serde_json::from_slice(&output.stdout).map_err(|e| fail(format!("bad response: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckFailure {
    pub check_name: String,
    pub score: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub image_id: String,
    pub passed: bool,
    pub failures: Vec<CheckFailure>,
    /// Plugins that errored; such images are kept.
    pub errors: Vec<String>,
}

impl QualityReport {
    /// True when every failure came from a plugin rather than a heuristic.
    pub fn compliance_only(&self) -> bool {
        !self.failures.is_empty()
            && self
                .failures
                .iter()
                .all(|f| f.check_name.starts_with("plugin:"))
    }
}

pub fn quality_gate(
    image_id: &str,
    img: &RasterImage,
    cfg: &QualityConfig,
    plugins: &PluginHost,
) -> QualityReport {
    let mut failures = Vec::new();
    let mut errors = Vec::new();

    let short_side = img.width().min(img.height());
    if short_side < cfg.min_resolution {
        failures.push(CheckFailure {
            check_name: "min_resolution".into(),
            score: short_side as f64,
            threshold: cfg.min_resolution as f64,
        });
    }

    match laplacian_variance(&to_grayscale(img)) {
        Ok(variance) if variance < cfg.blur_variance_threshold => failures.push(CheckFailure {
            check_name: "blur".into(),
            score: variance,
            threshold: cfg.blur_variance_threshold,
        }),
        Ok(_) => {}
        Err(e) => errors.push(format!("blur: {e}")),
    }

    let ratio = background_ratio(img);
    if ratio > cfg.background_ratio_threshold {
        failures.push(CheckFailure {
            check_name: "background_ratio".into(),
            score: ratio,
            threshold: cfg.background_ratio_threshold,
        });
    }

    for (name, result) in plugins.run(img) {
        match result {
            Ok(p) if p.label == NON_COMPLIANT && p.confidence >= cfg.plugin_cutoff => failures
                .push(CheckFailure {
                    check_name: format!("plugin:{name}"),
                    score: p.confidence,
                    threshold: cfg.plugin_cutoff,
                }),
            Ok(_) => {}
            Err(e) => {
                log::warn!("{image_id}: {e}; keeping image");
                errors.push(e.to_string());
            }
        }
    }

    QualityReport {
        image_id: image_id.to_string(),
        passed: failures.is_empty(),
        failures,
        errors,
    }
}

/// Center-crops each dimension to `crop_fraction` and resizes back up.
pub fn blur_augment(img: &RasterImage, crop_fraction: f64) -> Result<RasterImage, QualityError> {
    if !(crop_fraction > 0.0 && crop_fraction <= 1.0) {
        return Err(QualityError::CropFraction(crop_fraction));
    }
    let (w, h) = (img.width(), img.height());
    let cw = ((w as f64 * crop_fraction).round() as u32).clamp(1, w);
    let ch = ((h as f64 * crop_fraction).round() as u32).clamp(1, h);
    let cropped = img.crop((w - cw) / 2, (h - ch) / 2, cw, ch)?;
    Ok(resize_rgb(&cropped, w, h)?)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Padding {
    pub top: u32,
    pub bottom: u32,
    pub left: u32,
    pub right: u32,
}

impl Padding {
    pub fn uniform(p: u32) -> Self {
        Self {
            top: p,
            bottom: p,
            left: p,
            right: p,
        }
    }
}

pub fn pad_augment(img: &RasterImage, pads: Padding, fill: [u8; 3]) -> RasterImage {
    let w = img.width() + pads.left + pads.right;
    let h = img.height() + pads.top + pads.bottom;
    RasterImage::from_fn(w, h, |x, y| {
        let inside = x >= pads.left
            && x < pads.left + img.width()
            && y >= pads.top
            && y < pads.top + img.height();
        if inside {
            img.get(x - pads.left, y - pads.top)
        } else {
            fill
        }
    })
    .expect("padded dimensions are positive")
}
