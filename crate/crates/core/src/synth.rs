//! Procedural catalog-style product images and near-duplicate transforms.
//!
//! Images are composed of a few filled shapes (optionally patterned) on a
//! light background, rendered with 2x2 supersampling and mild sensor noise.
//! Everything is a pure function of a seed, so corpora and benchmarks are
//! reproducible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::quality::{pad_augment, Padding};
use crate::raster::{resize_rgb, to_u8, RasterImage};
use crate::typing::{CategoryProfile, TypeSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ShapeKind {
    Ellipse,
    /// Corner radius as a fraction of the half-size.
    RoundedRect(f64),
    Triangle,
    Shirt,
    Bottle,
    Ring,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Pattern {
    Solid,
    Stripes { period: f64, angle: f64 },
    Dots { period: f64 },
    Checker { period: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shape {
    pub kind: ShapeKind,
    /// Center, as fractions of the canvas.
    pub cx: f64,
    pub cy: f64,
    /// Half extents, as fractions of the canvas.
    pub hw: f64,
    pub hh: f64,
    /// Radians.
    pub rotation: f64,
    pub base: [u8; 3],
    pub accent: [u8; 3],
    /// Darkening along the light direction, 0..1.
    pub shade: f64,
    /// Direction the light falls off toward, radians in shape space.
    pub light_angle: f64,
    pub pattern: Pattern,
}

impl Shape {
    /// A thin dark bar, e.g. a stylus lying next to a tablet.
    pub fn stylus(cx: f64, cy: f64, length: f64, rotation: f64) -> Self {
        Shape {
            kind: ShapeKind::RoundedRect(0.9),
            cx,
            cy,
            hw: length / 2.0,
            hh: 0.018,
            rotation,
            base: [25, 25, 30],
            accent: [25, 25, 30],
            shade: 0.0,
            light_angle: 0.0,
            pattern: Pattern::Solid,
        }
    }

    fn local(&self, x: f64, y: f64) -> (f64, f64) {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let (s, c) = self.rotation.sin_cos();
        let (rx, ry) = (dx * c + dy * s, -dx * s + dy * c);
        (rx / self.hw, ry / self.hh)
    }

    fn contains_local(&self, u: f64, v: f64) -> bool {
        if u.abs() > 1.0 || v.abs() > 1.0 {
            return false;
        }
        match self.kind {
            ShapeKind::Ellipse => u * u + v * v <= 1.0,
            ShapeKind::RoundedRect(r) => {
                let r = r.clamp(0.0, 1.0);
                let (qu, qv) = (u.abs() - (1.0 - r), v.abs() - (1.0 - r));
                if qu <= 0.0 || qv <= 0.0 {
                    true
                } else {
                    qu * qu + qv * qv <= r * r
                }
            }
            ShapeKind::Triangle => u.abs() <= (v + 1.0) / 2.0,
            ShapeKind::Shirt => {
                let neck = u * u + (v + 1.0) * (v + 1.0) <= 0.09;
                let body = u.abs() <= 0.62 && v >= -0.85;
                let sleeves = (-0.85..=-0.15).contains(&v) && u.abs() <= 1.0 - (v + 0.85) * 0.35;
                (body || sleeves) && !neck
            }
            ShapeKind::Bottle => {
                let body = u.abs() <= 0.7 && v >= -0.35;
                let shoulder = (-0.6..-0.35).contains(&v) && u.abs() <= 0.3 + (v + 0.6) * 1.6;
                let neck = u.abs() <= 0.3 && v >= -1.0;
                body || shoulder || neck
            }
            ShapeKind::Ring => {
                let r2 = u * u + v * v;
                (0.3..=1.0).contains(&r2)
            }
        }
    }

    fn color_local(&self, u: f64, v: f64) -> [f64; 3] {
        let use_accent = match self.pattern {
            Pattern::Solid => false,
            Pattern::Stripes { period, angle } => {
                let t = u * angle.cos() + v * angle.sin();
                (t * period).rem_euclid(2.0) < 1.0
            }
            Pattern::Dots { period } => {
                let fu = (u * period).rem_euclid(2.0) - 1.0;
                let fv = (v * period).rem_euclid(2.0) - 1.0;
                fu * fu + fv * fv < 0.35
            }
            Pattern::Checker { period } => {
                ((u * period).floor() as i64 + (v * period).floor() as i64).rem_euclid(2) == 0
            }
        };
        let c = if use_accent { self.accent } else { self.base };
        let t = (u * self.light_angle.cos() + v * self.light_angle.sin()).clamp(-1.0, 1.0);
        let k = 1.0 - self.shade * (t + 1.0) / 2.0;
        [c[0] as f64 * k, c[1] as f64 * k, c[2] as f64 * k]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductSpec {
    pub width: u32,
    pub height: u32,
    pub background: [u8; 3],
    /// Later shapes are drawn on top.
    pub shapes: Vec<Shape>,
    /// Amplitude of per-pixel noise on the product, in 8-bit levels.
    pub noise: f64,
    pub noise_seed: u64,
}

fn hash_noise(seed: u64, x: u32, y: u32, c: u32) -> f64 {
    // splitmix64 over the coordinates, mapped to [-1, 1)
    let mut z =
        seed ^ ((x as u64) << 32 | y as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (c as u64) << 60;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 52) as f64 - 1.0
}

impl ProductSpec {
    pub fn render(&self) -> RasterImage {
        let (w, h) = (self.width as f64, self.height as f64);
        let offsets = [(0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75)];
        RasterImage::from_fn(self.width, self.height, |x, y| {
            let mut acc = [0.0; 3];
            let mut on_product = false;
            for (ox, oy) in offsets {
                let (fx, fy) = ((x as f64 + ox) / w, (y as f64 + oy) / h);
                let hit = self.shapes.iter().rev().find_map(|s| {
                    let (u, v) = s.local(fx, fy);
                    s.contains_local(u, v).then(|| s.color_local(u, v))
                });
                on_product |= hit.is_some();
                let sample = hit.unwrap_or(self.background.map(|c| c as f64));
                for c in 0..3 {
                    acc[c] += sample[c] / 4.0;
                }
            }
            // studio backgrounds are clipped clean; only the product is noisy
            let noise = if on_product { self.noise } else { 0.0 };
            let mut px = [0u8; 3];
            for c in 0..3 {
                px[c] = to_u8(acc[c] + noise * hash_noise(self.noise_seed, x, y, c as u32));
            }
            px
        })
        .expect("spec dimensions are positive")
    }

    /// Same geometry with every shape's colors replaced.
    pub fn recolored(&self, base: [u8; 3], accent: [u8; 3]) -> Self {
        let mut out = self.clone();
        for s in &mut out.shapes {
            s.base = base;
            s.accent = accent;
        }
        out
    }
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let c = v * s;
    let hp = (h / 60.0).rem_euclid(6.0);
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [
        to_u8((r + m) * 255.0),
        to_u8((g + m) * 255.0),
        to_u8((b + m) * 255.0),
    ]
}

fn random_color(rng: &mut ChaCha8Rng) -> [u8; 3] {
    let h = rng.random_range(0.0..360.0);
    let s = rng.random_range(0.25..1.0);
    let v = rng.random_range(0.2..0.85);
    hsv_to_rgb(h, s, v)
}

fn random_pattern(rng: &mut ChaCha8Rng) -> Pattern {
    match rng.random_range(0..4) {
        0 => Pattern::Solid,
        1 => Pattern::Stripes {
            period: rng.random_range(3.0..9.0),
            angle: rng.random_range(0.0..std::f64::consts::PI),
        },
        2 => Pattern::Dots {
            period: rng.random_range(3.0..7.0),
        },
        _ => Pattern::Checker {
            period: rng.random_range(2.0..5.0),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TabletView {
    Front,
    Back,
    Side,
    Lifestyle,
}

impl TabletView {
    pub const ALL: [TabletView; 4] = [
        TabletView::Front,
        TabletView::Back,
        TabletView::Side,
        TabletView::Lifestyle,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            TabletView::Front => "front",
            TabletView::Back => "back",
            TabletView::Side => "side",
            TabletView::Lifestyle => "lifestyle",
        }
    }
}

fn rect(cx: f64, cy: f64, hw: f64, hh: f64, radius: f64, color: [u8; 3]) -> Shape {
    Shape {
        kind: ShapeKind::RoundedRect(radius),
        cx,
        cy,
        hw,
        hh,
        rotation: 0.0,
        base: color,
        accent: color,
        shade: 0.0,
        light_angle: 0.0,
        pattern: Pattern::Solid,
    }
}

/// One space-gray tablet photographed from one of four standard views.
/// `variant` jitters framing, lighting and wallpaper tint.
pub fn tablet_view(view: TabletView, variant: u64) -> ProductSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(variant.wrapping_mul(0x9e37_79b9) ^ view as u64);
    let width = rng.random_range(380..=520);
    let height = rng.random_range(420..=560);
    let (cx, cy) = (
        0.5 + rng.random_range(-0.03..0.03),
        0.5 + rng.random_range(-0.03..0.03),
    );
    let size = rng.random_range(0.95..1.05);
    let tilt = rng.random_range(-0.04..0.04);
    let finish = [72, 74, 80];
    let mut shapes = Vec::new();
    let mut background = [255, 255, 255];

    let screen = |rng: &mut ChaCha8Rng, cx: f64, cy: f64, s: f64, rot: f64| -> Vec<Shape> {
        let mut body = rect(cx, cy, 0.36 * s, 0.44 * s, 0.1, [28, 28, 32]);
        body.rotation = rot;
        // Stock wallpaper: the same two-tone gradient in every shot, hue jittered slightly.
        let hue = 215.0 + rng.random_range(-8.0..8.0);
        let mut display = rect(cx, cy, 0.33 * s, 0.4 * s, 0.04, hsv_to_rgb(hue, 0.75, 0.95));
        display.rotation = rot;
        display.accent = hsv_to_rgb(hue + 60.0, 0.6, 0.9);
        display.pattern = Pattern::Stripes {
            period: rng.random_range(30.0..50.0),
            angle: rng.random_range(0.5..1.0),
        };
        display.shade = 0.25;
        display.light_angle = rng.random_range(0.0..std::f64::consts::TAU);
        let mut icon = rect(
            cx - 0.16 * s,
            cy - 0.22 * s,
            0.04 * s,
            0.03 * s,
            0.4,
            [250, 250, 250],
        );
        icon.rotation = rot;
        vec![body, display, icon]
    };

    match view {
        TabletView::Front => shapes.extend(screen(&mut rng, cx, cy, size, tilt)),
        TabletView::Back => {
            let mut body = rect(cx, cy, 0.36 * size, 0.44 * size, 0.1, finish);
            body.shade = 0.3;
            body.light_angle = rng.random_range(0.0..std::f64::consts::TAU);
            body.accent = finish.map(|c| c.saturating_sub(22));
            body.pattern = Pattern::Stripes {
                period: 40.0,
                angle: std::f64::consts::FRAC_PI_2,
            };
            body.rotation = tilt;
            shapes.push(body);
            let mut camera = rect(
                cx - 0.26 * size,
                cy - 0.34 * size,
                0.05 * size,
                0.05 * size,
                0.6,
                [35, 35, 38],
            );
            camera.rotation = tilt;
            shapes.push(camera);
            let mut lens = rect(
                cx - 0.26 * size,
                cy - 0.34 * size,
                0.025 * size,
                0.025 * size,
                1.0,
                [90, 100, 130],
            );
            lens.kind = ShapeKind::Ring;
            shapes.push(lens);
            let mut logo = rect(
                cx,
                cy,
                0.05 * size,
                0.05 * size,
                1.0,
                finish.map(|c| c.saturating_sub(60)),
            );
            logo.kind = ShapeKind::Ellipse;
            shapes.push(logo);
            for k in 0..3 {
                let y = cy + (0.3 + 0.03 * k as f64) * size;
                shapes.push(rect(
                    cx,
                    y,
                    0.12 * size,
                    0.006,
                    0.0,
                    finish.map(|c| c.saturating_sub(80)),
                ));
            }
        }
        TabletView::Side => {
            let mut edge = rect(cx, cy, 0.09 * size, 0.42 * size, 0.3, finish);
            edge.shade = 0.45;
            edge.light_angle = 0.0;
            edge.rotation = tilt;
            shapes.push(edge);
            for k in 0..3 {
                let y = cy - (0.3 - 0.06 * k as f64) * size;
                shapes.push(rect(
                    cx + 0.095 * size,
                    y,
                    0.008,
                    0.022 * size,
                    0.3,
                    [40, 40, 44],
                ));
            }
            for k in 0..4 {
                let y = cy + (0.34 + 0.015 * k as f64) * size;
                shapes.push(rect(cx, y, 0.012, 0.003, 0.0, [30, 30, 30]));
            }
        }
        TabletView::Lifestyle => {
            let wood = [
                rng.random_range(120..170),
                rng.random_range(80..110),
                rng.random_range(40..70),
            ];
            background = wood;
            let mut grain = rect(0.5, 0.5, 0.7, 0.7, 0.0, wood);
            grain.accent = wood.map(|c| c.saturating_sub(25));
            grain.pattern = Pattern::Stripes {
                period: rng.random_range(10.0..18.0),
                angle: rng.random_range(-0.2..0.2),
            };
            grain.shade = 0.25;
            shapes.push(grain);
            shapes.extend(screen(&mut rng, cx + 0.05, cy, size * 0.65, 0.35 + tilt));
            let mut mug = rect(0.2, 0.22, 0.1, 0.1, 1.0, random_color(&mut rng));
            mug.kind = ShapeKind::Ring;
            shapes.push(mug);
            shapes.push(Shape::stylus(0.78, 0.8, 0.35, -0.5));
        }
    }
    ProductSpec {
        width,
        height,
        background,
        shapes,
        noise: 3.0,
        noise_seed: variant ^ ((view as u64) << 40),
    }
}

/// Category profile for the tablet fixture: front first, one image per view.
pub fn tablet_profile() -> CategoryProfile {
    CategoryProfile {
        category_id: "tablets".into(),
        keywords: vec!["tablet".into(), "ipad".into()],
        types: TabletView::ALL
            .iter()
            .enumerate()
            .map(|(i, v)| TypeSpec {
                label: v.label().into(),
                priority: i as u32 + 1,
                max_count: 2,
            })
            .collect(),
    }
}

/// Rendered, labeled tablet views for `variants`, view-major.
pub fn tablet_training_set(variants: std::ops::Range<u64>) -> Vec<(RasterImage, String)> {
    TabletView::ALL
        .iter()
        .flat_map(|v| {
            variants
                .clone()
                .map(move |k| (tablet_view(*v, k).render(), v.label().to_string()))
        })
        .collect()
}

/// A deterministic random product photo.
pub fn random_product(seed: u64) -> ProductSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0fc0_ffee);
    let width = rng.random_range(240..=400);
    let height = rng.random_range(240..=400);
    let background = if rng.random_bool(0.8) {
        [255, 255, 255]
    } else {
        [244, 244, 246]
    };
    let kinds = [
        ShapeKind::Ellipse,
        ShapeKind::RoundedRect(rng.random_range(0.05..0.5)),
        ShapeKind::Triangle,
        ShapeKind::Shirt,
        ShapeKind::Bottle,
        ShapeKind::Ring,
    ];
    let main_kind = kinds[rng.random_range(0..kinds.len())];
    let base = random_color(&mut rng);
    let mut shapes = vec![Shape {
        kind: main_kind,
        cx: rng.random_range(0.42..0.58),
        cy: rng.random_range(0.42..0.58),
        hw: rng.random_range(0.26..0.4),
        hh: rng.random_range(0.26..0.4),
        rotation: rng.random_range(-0.5..0.5),
        base,
        accent: random_color(&mut rng),
        shade: rng.random_range(0.2..0.55),
        light_angle: rng.random_range(0.0..std::f64::consts::TAU),
        pattern: random_pattern(&mut rng),
    }];
    for _ in 0..rng.random_range(1..=3) {
        shapes.push(Shape {
            kind: kinds[rng.random_range(0..kinds.len())],
            cx: rng.random_range(0.3..0.7),
            cy: rng.random_range(0.3..0.7),
            hw: rng.random_range(0.05..0.16),
            hh: rng.random_range(0.05..0.16),
            rotation: rng.random_range(-1.5..1.5),
            base: random_color(&mut rng),
            accent: random_color(&mut rng),
            shade: rng.random_range(0.1..0.4),
            light_angle: rng.random_range(0.0..std::f64::consts::TAU),
            pattern: random_pattern(&mut rng),
        });
    }
    ProductSpec {
        width,
        height,
        background,
        shapes,
        noise: 2.0,
        noise_seed: seed,
    }
}

/// The same product in another colorway: geometry and patterns kept, every
/// shape recolored, fresh sensor noise.
pub fn colorway(spec: &ProductSpec, seed: u64) -> ProductSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0c01_00a7);
    let mut out = spec.clone();
    for s in &mut out.shapes {
        s.base = random_color(&mut rng);
        s.accent = random_color(&mut rng);
    }
    out.noise_seed = rng.random();
    out
}

/// Catalog-like corpus: `families` products, each photographed in
/// `colorways` color variants, family-major order.
pub fn catalog_corpus(families: usize, colorways: usize, base_seed: u64) -> Vec<RasterImage> {
    use rayon::prelude::*;
    (0..families * colorways)
        .into_par_iter()
        .map(|i| {
            let (f, c) = ((i / colorways) as u64, (i % colorways) as u64);
            let spec = random_product(base_seed.wrapping_add(f));
            if c == 0 {
                spec.render()
            } else {
                colorway(
                    &spec,
                    base_seed.wrapping_add(f).wrapping_mul(31).wrapping_add(c),
                )
                .render()
            }
        })
        .collect()
}

/// `n` distinct product photos, seeds `0..n` offset by `base_seed`.
pub fn product_corpus(n: usize, base_seed: u64) -> Vec<RasterImage> {
    use rayon::prelude::*;
    (0..n as u64)
        .into_par_iter()
        .map(|i| random_product(base_seed.wrapping_add(i)).render())
        .collect()
}

fn bilinear_sample(img: &RasterImage, x: f64, y: f64, fill: [u8; 3]) -> [f64; 3] {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let (x0, y0) = (x.floor() as i64, y.floor() as i64);
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let px = |xx: i64, yy: i64| -> [f64; 3] {
        if xx < 0 || yy < 0 || xx >= w || yy >= h {
            fill.map(|c| c as f64)
        } else {
            img.get(xx as u32, yy as u32).map(|c| c as f64)
        }
    };
    let (a, b, c, d) = (
        px(x0, y0),
        px(x0 + 1, y0),
        px(x0, y0 + 1),
        px(x0 + 1, y0 + 1),
    );
    let mut out = [0.0; 3];
    for k in 0..3 {
        out[k] = a[k] * (1.0 - fx) * (1.0 - fy)
            + b[k] * fx * (1.0 - fy)
            + c[k] * (1.0 - fx) * fy
            + d[k] * fx * fy;
    }
    out
}

/// Maps each output pixel through the inverse 2x2 `matrix` (about the image
/// center, after removing `shift`) and samples bilinearly.
pub fn affine_warp(
    img: &RasterImage,
    inverse: [[f64; 2]; 2],
    shift: (f64, f64),
    fill: [u8; 3],
) -> RasterImage {
    let (cx, cy) = (
        (img.width() as f64 - 1.0) / 2.0,
        (img.height() as f64 - 1.0) / 2.0,
    );
    RasterImage::from_fn(img.width(), img.height(), |x, y| {
        let (dx, dy) = (x as f64 - cx - shift.0, y as f64 - cy - shift.1);
        let sx = inverse[0][0] * dx + inverse[0][1] * dy + cx;
        let sy = inverse[1][0] * dx + inverse[1][1] * dy + cy;
        bilinear_sample(img, sx, sy, fill).map(to_u8)
    })
    .expect("same dimensions")
}

pub fn translate(img: &RasterImage, dx: f64, dy: f64, fill: [u8; 3]) -> RasterImage {
    affine_warp(img, [[1.0, 0.0], [0.0, 1.0]], (dx, dy), fill)
}

pub fn rotate(img: &RasterImage, degrees: f64, fill: [u8; 3]) -> RasterImage {
    let (s, c) = degrees.to_radians().sin_cos();
    affine_warp(img, [[c, s], [-s, c]], (0.0, 0.0), fill)
}

/// Horizontal shear by `degrees`.
pub fn shear(img: &RasterImage, degrees: f64, fill: [u8; 3]) -> RasterImage {
    let k = degrees.to_radians().tan();
    affine_warp(img, [[1.0, -k], [0.0, 1.0]], (0.0, 0.0), fill)
}

pub fn scale(img: &RasterImage, factor: f64) -> RasterImage {
    let w = ((img.width() as f64 * factor).round() as u32).max(1);
    let h = ((img.height() as f64 * factor).round() as u32).max(1);
    resize_rgb(img, w, h).expect("non-zero target")
}

fn mean_luma(img: &RasterImage) -> f64 {
    img.pixels()
        .iter()
        .map(|&p| crate::raster::luma_of(p))
        .sum::<f64>()
        / img.pixels().len() as f64
}

/// Blends each pixel toward the mean luma; `factor` 1 is the identity.
pub fn adjust_contrast(img: &RasterImage, factor: f64) -> RasterImage {
    let mean = mean_luma(img);
    RasterImage::from_fn(img.width(), img.height(), |x, y| {
        img.get(x, y)
            .map(|c| to_u8(mean + factor * (c as f64 - mean)))
    })
    .expect("same dimensions")
}

/// Blends with a 3x3 smoothed copy; `factor` above 1 sharpens, below 1
/// softens. Border pixels are kept.
pub fn adjust_sharpness(img: &RasterImage, factor: f64) -> RasterImage {
    let (w, h) = (img.width(), img.height());
    RasterImage::from_fn(w, h, |x, y| {
        let orig = img.get(x, y);
        if x == 0 || y == 0 || x + 1 == w || y + 1 == h {
            return orig;
        }
        let mut out = [0u8; 3];
        for c in 0..3 {
            let mut acc = 0.0;
            for dy in 0..3 {
                for dx in 0..3 {
                    let wgt = if dx == 1 && dy == 1 { 5.0 } else { 1.0 };
                    acc += wgt * img.get(x + dx - 1, y + dy - 1)[c] as f64;
                }
            }
            let smooth = acc / 13.0;
            out[c] = to_u8(smooth + factor * (orig[c] as f64 - smooth));
        }
        out
    })
    .expect("same dimensions")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Geometric {
    /// Fractions of width / height.
    Translate {
        dx: f64,
        dy: f64,
    },
    Rotate {
        degrees: f64,
    },
    Shear {
        degrees: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Photometric {
    Contrast(f64),
    Sharpness(f64),
}

/// Caps on near-duplicate transform magnitudes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformLimits {
    pub max_translate: f64,
    pub max_rotate_deg: f64,
    pub max_shear_deg: f64,
    pub scale_range: (f64, f64),
    pub max_photometric: f64,
    /// Per-side padding, as a fraction of the dimension.
    pub max_pad: f64,
}

impl Default for TransformLimits {
    fn default() -> Self {
        Self {
            max_translate: 0.05,
            max_rotate_deg: 3.0,
            max_shear_deg: 2.0,
            scale_range: (0.5, 2.0),
            max_photometric: 0.15,
            max_pad: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NearDuplicateTransform {
    pub geometric: Option<Geometric>,
    pub photometric: Option<Photometric>,
    pub padding: Option<(f64, f64, f64, f64)>,
    pub scale: f64,
}

impl NearDuplicateTransform {
    /// One geometric, photometric or padding change, plus a rescale.
    pub fn sample(rng: &mut impl Rng, limits: &TransformLimits) -> Self {
        let sym = |rng: &mut dyn rand::RngCore, m: f64| {
            if m > 0.0 {
                rng.random_range(-m..=m)
            } else {
                0.0
            }
        };
        let mut t = Self {
            geometric: None,
            photometric: None,
            padding: None,
            scale: 1.0,
        };
        match rng.random_range(0..6) {
            0 => {
                // displacement length is capped, in any direction
                let r = rng.random_range(0.0..=limits.max_translate);
                let theta = rng.random_range(0.0..std::f64::consts::TAU);
                t.geometric = Some(Geometric::Translate {
                    dx: r * theta.cos(),
                    dy: r * theta.sin(),
                });
            }
            1 => {
                t.geometric = Some(Geometric::Rotate {
                    degrees: sym(rng, limits.max_rotate_deg),
                })
            }
            2 => {
                t.geometric = Some(Geometric::Shear {
                    degrees: sym(rng, limits.max_shear_deg),
                })
            }
            3 => {
                t.photometric = Some(Photometric::Contrast(
                    1.0 + sym(rng, limits.max_photometric),
                ))
            }
            4 => {
                t.photometric = Some(Photometric::Sharpness(
                    1.0 + sym(rng, limits.max_photometric),
                ))
            }
            _ => {
                let mut side = || rng.random_range(0.0..=limits.max_pad);
                t.padding = Some((side(), side(), side(), side()));
            }
        }
        let (lo, hi) = limits.scale_range;
        t.scale = rng.random_range(lo.ln()..=hi.ln()).exp();
        t
    }

    pub fn apply(&self, img: &RasterImage, fill: [u8; 3]) -> RasterImage {
        let mut out = match self.geometric {
            Some(Geometric::Translate { dx, dy }) => {
                translate(img, dx * img.width() as f64, dy * img.height() as f64, fill)
            }
            Some(Geometric::Rotate { degrees }) => rotate(img, degrees, fill),
            Some(Geometric::Shear { degrees }) => shear(img, degrees, fill),
            None => img.clone(),
        };
        out = match self.photometric {
            Some(Photometric::Contrast(f)) => adjust_contrast(&out, f),
            Some(Photometric::Sharpness(f)) => adjust_sharpness(&out, f),
            None => out,
        };
        if let Some((t, b, l, r)) = self.padding {
            let (w, h) = (out.width() as f64, out.height() as f64);
            let pads = Padding {
                top: (t * h).round() as u32,
                bottom: (b * h).round() as u32,
                left: (l * w).round() as u32,
                right: (r * w).round() as u32,
            };
            out = pad_augment(&out, pads, fill);
        }
        scale(&out, self.scale)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rendering_is_deterministic() {
        let a = random_product(7).render();
        let b = random_product(7).render();
        assert_eq!(a, b);
        assert_ne!(a, random_product(8).render());
    }

    #[test]
    fn identity_transforms() {
        let img = random_product(3).render();
        assert_eq!(translate(&img, 0.0, 0.0, [255; 3]), img);
        assert_eq!(rotate(&img, 0.0, [255; 3]), img);
        assert_eq!(adjust_contrast(&img, 1.0), img);
        assert_eq!(adjust_sharpness(&img, 1.0), img);
        assert_eq!(scale(&img, 1.0), img);
    }

    #[test]
    fn hsv_round_colors() {
        assert_eq!(hsv_to_rgb(0.0, 1.0, 1.0), [255, 0, 0]);
        assert_eq!(hsv_to_rgb(240.0, 1.0, 1.0), [0, 0, 255]);
    }

    #[test]
    fn transform_sampling_respects_limits() {
        let limits = TransformLimits::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            let t = NearDuplicateTransform::sample(&mut rng, &limits);
            assert!((0.5 - 1e-9..=2.0 + 1e-9).contains(&t.scale));
            match t.geometric {
                Some(Geometric::Translate { dx, dy }) => assert!(dx.hypot(dy) <= 0.05 + 1e-12),
                Some(Geometric::Rotate { degrees }) => assert!(degrees.abs() <= 3.0),
                Some(Geometric::Shear { degrees }) => assert!(degrees.abs() <= 2.0),
                None => {}
            }
            if let Some(Photometric::Contrast(f) | Photometric::Sharpness(f)) = t.photometric {
                assert!((0.85..=1.15).contains(&f));
            }
        }
    }

    #[test]
    fn tablet_views_pass_quality_and_classify() {
        use crate::quality::{quality_gate, PluginHost, QualityConfig};
        use crate::typing::{train_centroid_classifier, TypeClassifier};

        let model =
            train_centroid_classifier(&tablet_training_set(0..6), &tablet_profile()).unwrap();
        for v in TabletView::ALL {
            for k in 100..110 {
                let img = tablet_view(v, k).render();
                let report = quality_gate("t", &img, &QualityConfig::default(), &PluginHost::new());
                assert!(report.passed, "{v:?} {k}: {:?}", report.failures);
                assert_eq!(model.classify(&img).label, v.label(), "{v:?} {k}");
            }
        }
    }
}
