//! Labeled pair benchmarks and per-method threshold sweeps.

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};
use std::io::{BufRead, BufReader, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comparator::{ComparatorConfig, CompareError, Method};
use crate::descriptor::{
    chi_square, compute_descriptor_with, hamming, DescriptorOptions, ImageDescriptor,
};
use crate::quality::dominant_border_color;
use crate::raster::{RasterError, RasterImage};
use crate::synth::{NearDuplicateTransform, TransformLimits};

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("benchmark generation needs at least 2 seed images, got {0}")]
    TooFewSeeds(usize),
    #[error("benchmark generation needs at least 2 pairs, got {0}")]
    TooFewPairs(usize),
    #[error("threshold list is empty")]
    NoThresholds,
    #[error("thresholds must be sorted ascending ({0} follows {1})")]
    UnsortedThresholds(f64, f64),
    #[error("{0}")]
    Compare(#[from] CompareError),
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Raster(#[from] RasterError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Duplicate,
    Different,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Synthetic,
    Real,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkPair {
    pub left: String,
    pub right: String,
    pub label: Label,
    pub origin: Origin,
}

/// Pairs plus the images they reference, keyed by ref.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub images: BTreeMap<String, RasterImage>,
    pub pairs: Vec<BenchmarkPair>,
}

pub fn seed_ref(i: usize) -> String {
    format!("seed_{i:04}.png")
}

pub fn variant_ref(k: usize) -> String {
    format!("dup_{k:05}.png")
}

/// Half near-duplicate pairs (a seed against a transformed copy), half pairs
/// of distinct seeds. Odd counts give the extra pair to "different".
pub fn generate_benchmark(
    seeds: &[RasterImage],
    n_pairs: usize,
    rng_seed: u64,
) -> Result<Benchmark, CalibrationError> {
    generate_benchmark_with(seeds, n_pairs, rng_seed, &TransformLimits::default())
}

pub fn generate_benchmark_with(
    seeds: &[RasterImage],
    n_pairs: usize,
    rng_seed: u64,
    limits: &TransformLimits,
) -> Result<Benchmark, CalibrationError> {
    if seeds.len() < 2 {
        return Err(CalibrationError::TooFewSeeds(seeds.len()));
    }
    if n_pairs < 2 {
        return Err(CalibrationError::TooFewPairs(n_pairs));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let n_dup = n_pairs / 2;
    let plans: Vec<(usize, NearDuplicateTransform)> = (0..n_dup)
        .map(|_| {
            (
                rng.random_range(0..seeds.len()),
                NearDuplicateTransform::sample(&mut rng, limits),
            )
        })
        .collect();
    let different: Vec<(usize, usize)> = (0..n_pairs - n_dup)
        .map(|_| {
            let a = rng.random_range(0..seeds.len());
            let b = (a + rng.random_range(1..seeds.len())) % seeds.len();
            (a, b)
        })
        .collect();

    let variants: Vec<RasterImage> = plans
        .par_iter()
        .map(|(s, t)| t.apply(&seeds[*s], dominant_border_color(&seeds[*s])))
        .collect();

    let mut images: BTreeMap<String, RasterImage> = BTreeMap::new();
    let mut pairs = Vec::with_capacity(n_pairs);
    for (k, ((s, _), variant)) in plans.iter().zip(variants).enumerate() {
        images
            .entry(seed_ref(*s))
            .or_insert_with(|| seeds[*s].clone());
        images.insert(variant_ref(k), variant);
        pairs.push(BenchmarkPair {
            left: seed_ref(*s),
            right: variant_ref(k),
            label: Label::Duplicate,
            origin: Origin::Synthetic,
        });
    }
    for (a, b) in different {
        for i in [a, b] {
            images
                .entry(seed_ref(i))
                .or_insert_with(|| seeds[i].clone());
        }
        pairs.push(BenchmarkPair {
            left: seed_ref(a),
            right: seed_ref(b),
            label: Label::Different,
            origin: Origin::Synthetic,
        });
    }
    Ok(Benchmark { images, pairs })
}

impl Benchmark {
    /// Writes every image as PNG plus `pairs.jsonl` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<PathBuf, CalibrationError> {
        std::fs::create_dir_all(dir).map_err(|source| CalibrationError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        self.images
            .par_iter()
            .try_for_each(|(name, img)| img.save_png(dir.join(name)))?;
        let pairs_path = dir.join("pairs.jsonl");
        write_pairs(&pairs_path, &self.pairs)?;
        Ok(pairs_path)
    }
}

pub fn write_pairs(path: &Path, pairs: &[BenchmarkPair]) -> Result<(), CalibrationError> {
    let io = |source| CalibrationError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    for p in pairs {
        writeln!(
            out,
            "{}",
            serde_json::to_string(p).expect("pairs serialize")
        )
        .map_err(io)?;
    }
    out.flush().map_err(io)
}

/// One JSON object per line; blank lines are skipped.
pub fn read_pairs(path: &Path) -> Result<Vec<BenchmarkPair>, CalibrationError> {
    let io = |source| CalibrationError::Io {
        path: path.to_path_buf(),
        source,
    };
    let reader = BufReader::new(std::fs::File::open(path).map_err(io)?);
    let mut pairs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        pairs.push(
            serde_json::from_str(&line).map_err(|e| CalibrationError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?,
        );
    }
    Ok(pairs)
}

/// Descriptors for benchmark refs. Refs that failed to load are simply absent.
#[derive(Debug, Clone, Default)]
pub struct DescriptorStore {
    descriptors: HashMap<String, ImageDescriptor>,
}

impl DescriptorStore {
    pub fn from_images(images: &BTreeMap<String, RasterImage>, opts: DescriptorOptions) -> Self {
        Self {
            descriptors: images
                .par_iter()
                .map(|(k, img)| (k.clone(), compute_descriptor_with(img, opts)))
                .collect(),
        }
    }

    /// Loads every ref mentioned by `pairs`, resolved against `root`.
    /// Returns the store and the refs that could not be loaded.
    pub fn load_refs(
        root: &Path,
        pairs: &[BenchmarkPair],
        opts: DescriptorOptions,
    ) -> (Self, Vec<String>) {
        let mut refs: Vec<&str> = pairs
            .iter()
            .flat_map(|p| [p.left.as_str(), p.right.as_str()])
            .collect();
        refs.sort_unstable();
        refs.dedup();
        let loaded: Vec<(String, Option<ImageDescriptor>)> = refs
            .par_iter()
            .map(|r| {
                let d = RasterImage::open(root.join(r))
                    .ok()
                    .map(|img| compute_descriptor_with(&img, opts));
                (r.to_string(), d)
            })
            .collect();
        let mut store = Self::default();
        let mut missing = Vec::new();
        for (r, d) in loaded {
            match d {
                Some(d) => {
                    store.descriptors.insert(r, d);
                }
                None => missing.push(r),
            }
        }
        (store, missing)
    }

    pub fn insert(&mut self, r: impl Into<String>, d: ImageDescriptor) {
        self.descriptors.insert(r.into(), d);
    }

    pub fn get(&self, r: &str) -> Option<&ImageDescriptor> {
        self.descriptors.get(r)
    }

    pub fn len(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }
}

/// A single comparator method, or the ensemble with its hash thresholds
/// fixed and the histogram threshold free.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BenchMethod {
    Single(Method),
    Ensemble {
        phash_threshold: u32,
        dhash_threshold: u32,
    },
}

impl BenchMethod {
    pub fn ensemble(cfg: &ComparatorConfig) -> Self {
        BenchMethod::Ensemble {
            phash_threshold: cfg.phash_threshold,
            dhash_threshold: cfg.dhash_threshold,
        }
    }

    /// A scalar such that `score <= threshold` is the duplicate verdict.
    /// For the ensemble that is the histogram distance when both hash
    /// components agree and infinity otherwise.
    pub fn score(&self, a: &ImageDescriptor, b: &ImageDescriptor) -> Result<f64, CompareError> {
        match *self {
            BenchMethod::Single(m) => m.distance(a, b),
            BenchMethod::Ensemble {
                phash_threshold,
                dhash_threshold,
            } => Ok(
                if hamming(a.phash, b.phash) <= phash_threshold
                    && hamming(a.dhash, b.dhash) <= dhash_threshold
                {
                    chi_square(&a.histogram, &b.histogram)
                } else {
                    f64::INFINITY
                },
            ),
        }
    }

    /// Comparator configuration equivalent to the ensemble at `threshold`.
    pub fn ensemble_config(
        &self,
        threshold: f64,
        edge_enhance_dhash: bool,
    ) -> Option<ComparatorConfig> {
        match *self {
            BenchMethod::Ensemble {
                phash_threshold,
                dhash_threshold,
            } => Some(ComparatorConfig {
                phash_threshold,
                dhash_threshold,
                hist_threshold: threshold,
                edge_enhance_dhash,
            }),
            BenchMethod::Single(_) => None,
        }
    }

    /// Operating point used when no threshold is given.
    pub fn default_threshold(&self) -> f64 {
        match self {
            BenchMethod::Single(m) => operating_point(*m),
            BenchMethod::Ensemble { .. } => ComparatorConfig::default().hist_threshold,
        }
    }

    /// Sweep grid that contains the operating point.
    pub fn default_thresholds(&self) -> Vec<f64> {
        match self {
            BenchMethod::Single(m) if m.is_hash() => (0..=32).map(f64::from).collect(),
            BenchMethod::Single(Method::RawCosine) => (0..=40).map(|i| i as f64 / 400.0).collect(),
            _ => (0..=40).map(|i| i as f64 / 20.0).collect(),
        }
    }
}

impl fmt::Display for BenchMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BenchMethod::Single(m) => f.write_str(m.as_str()),
            BenchMethod::Ensemble { .. } => f.write_str("ensemble"),
        }
    }
}

impl FromStr for BenchMethod {
    type Err = CompareError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "ensemble" {
            Ok(BenchMethod::ensemble(&ComparatorConfig::default()))
        } else {
            s.parse().map(BenchMethod::Single)
        }
    }
}

/// Default operating points; raw cosine is expressed as a distance
/// (similarity 0.99). The histogram has none and uses the local default.
pub fn operating_point(method: Method) -> f64 {
    match method {
        Method::Ahash => 10.0,
        Method::Phash => 10.0,
        Method::Dhash => 20.0,
        Method::Whash => 15.0,
        Method::RawCosine => 0.01,
        Method::Histogram => ComparatorConfig::default().hist_threshold,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Metrics {
    pub fn from_counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            tp,
            fp,
            tn,
            fn_,
            precision,
            recall,
            f1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Per-pair scores under one method; `None` marks unresolvable refs.
#[derive(Debug, Clone)]
pub struct PairScores {
    pub method: BenchMethod,
    pub scores: Vec<Option<f64>>,
    pub labels: Vec<Label>,
}

impl PairScores {
    pub fn compute(
        pairs: &[BenchmarkPair],
        store: &DescriptorStore,
        method: BenchMethod,
    ) -> Result<Self, CompareError> {
        let scores = pairs
            .par_iter()
            .map(|p| match (store.get(&p.left), store.get(&p.right)) {
                (Some(a), Some(b)) => method.score(a, b).map(Some),
                _ => Ok(None),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            method,
            scores,
            labels: pairs.iter().map(|p| p.label).collect(),
        })
    }

    pub fn unresolved(&self) -> usize {
        self.scores.iter().filter(|s| s.is_none()).count()
    }

    pub fn metrics_at(&self, threshold: f64) -> Metrics {
        let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
        for (score, label) in self.scores.iter().zip(&self.labels) {
            let Some(score) = score else { continue };
            match (*score <= threshold, label) {
                (true, Label::Duplicate) => tp += 1,
                (true, Label::Different) => fp += 1,
                (false, Label::Different) => tn += 1,
                (false, Label::Duplicate) => fn_ += 1,
            }
        }
        Metrics::from_counts(tp, fp, tn, fn_)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub metrics: Metrics,
    /// Pairs skipped because a ref had no descriptor.
    pub unresolved: usize,
}

pub fn evaluate(
    pairs: &[BenchmarkPair],
    store: &DescriptorStore,
    method: BenchMethod,
    threshold: f64,
) -> Result<Evaluation, CompareError> {
    let scores = PairScores::compute(pairs, store, method)?;
    let unresolved = scores.unresolved();
    if unresolved > 0 {
        log::warn!("{unresolved} pair(s) reference images without descriptors; excluded");
    }
    Ok(Evaluation {
        metrics: scores.metrics_at(threshold),
        unresolved,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub method: String,
    pub rows: Vec<SweepRow>,
    pub optimal_threshold: f64,
    pub unresolved: usize,
}

impl CalibrationReport {
    pub fn optimal(&self) -> &SweepRow {
        self.rows
            .iter()
            .find(|r| r.threshold == self.optimal_threshold)
            .expect("optimal threshold is one of the rows")
    }

    pub fn render_table(&self) -> String {
        let mut out = format!("method: {}\n", self.method);
        let _ = writeln!(
            out,
            "{:>10} {:>6} {:>6} {:>6} {:>6} {:>9} {:>7} {:>7}",
            "threshold", "tp", "fp", "tn", "fn", "precision", "recall", "f1"
        );
        for r in &self.rows {
            let m = &r.metrics;
            let mark = if r.threshold == self.optimal_threshold {
                " *"
            } else {
                ""
            };
            let _ = writeln!(
                out,
                "{:>10} {:>6} {:>6} {:>6} {:>6} {:>9.4} {:>7.4} {:>7.4}{mark}",
                r.threshold, m.tp, m.fp, m.tn, m.fn_, m.precision, m.recall, m.f1
            );
        }
        let _ = writeln!(out, "optimal threshold: {}", self.optimal_threshold);
        if self.unresolved > 0 {
            let _ = writeln!(out, "unresolved pairs: {}", self.unresolved);
        }
        out
    }
}

fn check_thresholds(thresholds: &[f64]) -> Result<(), CalibrationError> {
    if thresholds.is_empty() {
        return Err(CalibrationError::NoThresholds);
    }
    for w in thresholds.windows(2) {
        if !(w[0] <= w[1]) {
            return Err(CalibrationError::UnsortedThresholds(w[1], w[0]));
        }
    }
    Ok(())
}

/// Sweep from precomputed scores. Optimal is the maximum F1; ties go to the
/// smaller threshold.
pub fn sweep_scores(
    scores: &PairScores,
    thresholds: &[f64],
) -> Result<CalibrationReport, CalibrationError> {
    check_thresholds(thresholds)?;
    let rows: Vec<SweepRow> = thresholds
        .iter()
        .map(|&threshold| SweepRow {
            threshold,
            metrics: scores.metrics_at(threshold),
        })
        .collect();
    let mut best = &rows[0];
    for r in &rows[1..] {
        if r.metrics.f1 > best.metrics.f1 {
            best = r;
        }
    }
    Ok(CalibrationReport {
        method: scores.method.to_string(),
        optimal_threshold: best.threshold,
        unresolved: scores.unresolved(),
        rows,
    })
}

pub fn sweep(
    pairs: &[BenchmarkPair],
    store: &DescriptorStore,
    method: BenchMethod,
    thresholds: &[f64],
) -> Result<CalibrationReport, CalibrationError> {
    check_thresholds(thresholds)?;
    let scores = PairScores::compute(pairs, store, method)?;
    if scores.unresolved() > 0 {
        log::warn!(
            "{} pair(s) reference images without descriptors; excluded",
            scores.unresolved()
        );
    }
    sweep_scores(&scores, thresholds)
}

/// Parses `a..b` (integer steps, inclusive), `a..b:step`, or a comma list.
pub fn parse_thresholds(spec: &str) -> Result<Vec<f64>, String> {
    let spec = spec.trim();
    if let Some((lo, rest)) = spec.split_once("..") {
        let (hi, step) = match rest.split_once(':') {
            Some((hi, step)) => (
                hi,
                step.trim()
                    .parse::<f64>()
                    .map_err(|e| format!("bad step: {e}"))?,
            ),
            None => (rest, 1.0),
        };
        let lo: f64 = lo
            .trim()
            .parse()
            .map_err(|e| format!("bad range start: {e}"))?;
        let hi: f64 = hi
            .trim()
            .parse()
            .map_err(|e| format!("bad range end: {e}"))?;
        if !(step > 0.0) || !(lo <= hi) {
            return Err(format!("empty or invalid range {spec:?}"));
        }
        let n = ((hi - lo) / step + 1e-9).floor() as usize;
        return Ok((0..=n)
            .map(|i| ((lo + i as f64 * step) * 1e9).round() / 1e9)
            .collect());
    }
    spec.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| format!("bad threshold {t:?}: {e}"))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::BitHash64;
    use crate::synth::random_product;

    fn seeds(n: usize) -> Vec<RasterImage> {
        (0..n as u64)
            .map(|i| random_product(100 + i).render())
            .collect()
    }

    #[test]
    fn split_and_determinism() {
        let s = seeds(2);
        let b = generate_benchmark(&s, 2, 9).unwrap();
        let dup = b
            .pairs
            .iter()
            .filter(|p| p.label == Label::Duplicate)
            .count();
        assert_eq!((dup, b.pairs.len()), (1, 2));
        let again = generate_benchmark(&s, 2, 9).unwrap();
        assert_eq!(b.pairs, again.pairs);
        assert_eq!(b.images, again.images);
        assert!(matches!(
            generate_benchmark(&s[..1], 4, 0),
            Err(CalibrationError::TooFewSeeds(1))
        ));
        assert!(matches!(
            generate_benchmark(&s, 1, 0),
            Err(CalibrationError::TooFewPairs(1))
        ));
        for p in &b.pairs {
            assert!(b.images.contains_key(&p.left) && b.images.contains_key(&p.right));
            if p.label == Label::Different {
                assert_ne!(p.left, p.right);
            }
        }
    }

    #[test]
    fn metric_formulas() {
        let m = Metrics::from_counts(0, 0, 5, 0);
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
        let m = Metrics::from_counts(3, 1, 4, 2);
        assert_eq!(m.precision, 0.75);
        assert_eq!(m.recall, 0.6);
        assert!((m.f1 - 2.0 * 0.75 * 0.6 / 1.35).abs() < 1e-12);
        assert_eq!(m.total(), 10);
    }

    fn store_with_phash(hashes: &[(&str, u64)]) -> DescriptorStore {
        let base = compute_descriptor_with(
            &RasterImage::filled(8, 8, [9, 9, 9]).unwrap(),
            DescriptorOptions::default(),
        );
        let mut store = DescriptorStore::default();
        for (r, h) in hashes {
            let mut d = base.clone();
            d.phash = BitHash64(*h);
            store.insert(*r, d);
        }
        store
    }

    fn pair(l: &str, r: &str, label: Label) -> BenchmarkPair {
        BenchmarkPair {
            left: l.into(),
            right: r.into(),
            label,
            origin: Origin::Real,
        }
    }

    #[test]
    fn degenerate_and_perfect() {
        let store = store_with_phash(&[("a", 0), ("b", u64::MAX), ("c", 0b111)]);
        let all_different = vec![
            pair("a", "b", Label::Different),
            pair("b", "c", Label::Different),
        ];
        let e = evaluate(
            &all_different,
            &store,
            BenchMethod::Single(Method::Phash),
            10.0,
        )
        .unwrap();
        assert_eq!(
            (e.metrics.tn, e.metrics.precision, e.metrics.recall),
            (2, 0.0, 0.0)
        );

        let mixed = vec![
            pair("a", "c", Label::Duplicate),
            pair("a", "b", Label::Different),
        ];
        let e = evaluate(&mixed, &store, BenchMethod::Single(Method::Phash), 10.0).unwrap();
        assert_eq!(e.metrics.f1, 1.0);

        let with_missing = vec![
            pair("a", "zzz", Label::Duplicate),
            pair("a", "c", Label::Duplicate),
        ];
        let e = evaluate(
            &with_missing,
            &store,
            BenchMethod::Single(Method::Phash),
            10.0,
        )
        .unwrap();
        assert_eq!((e.unresolved, e.metrics.total()), (1, 1));
    }

    #[test]
    fn sweep_contract() {
        let store = store_with_phash(&[("a", 0), ("b", u64::MAX), ("c", 0b111), ("d", 0xffff)]);
        let pairs = vec![
            pair("a", "c", Label::Duplicate),
            pair("a", "d", Label::Duplicate),
            pair("a", "b", Label::Different),
        ];
        let method = BenchMethod::Single(Method::Phash);
        let r = sweep(&pairs, &store, method, &[0.0, 64.0]).unwrap();
        assert_eq!(r.rows[1].metrics.recall, 1.0);
        let r = sweep(&pairs, &store, method, &[0.0, 3.0, 16.0, 20.0, 64.0]).unwrap();
        // 16 and 20 both reach f1 = 1; the smaller wins
        assert_eq!(r.optimal_threshold, 16.0);
        assert!(r
            .rows
            .windows(2)
            .all(|w| w[0].metrics.recall <= w[1].metrics.recall));
        assert!(matches!(
            sweep(&pairs, &store, method, &[]),
            Err(CalibrationError::NoThresholds)
        ));
        assert!(matches!(
            sweep(&pairs, &store, method, &[3.0, 1.0]),
            Err(CalibrationError::UnsortedThresholds(..))
        ));
        assert!(r.render_table().contains("optimal threshold: 16"));
    }

    #[test]
    fn threshold_parsing() {
        assert_eq!(parse_thresholds("0..3").unwrap(), vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(parse_thresholds("0..0.2:0.1").unwrap().len(), 3);
        assert_eq!(parse_thresholds("1, 5,9").unwrap(), vec![1.0, 5.0, 9.0]);
        assert!(parse_thresholds("5..1").is_err());
        assert!(parse_thresholds("x").is_err());
    }

    #[test]
    fn pairs_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.jsonl");
        let pairs = vec![pair("a.png", "b.png", Label::Duplicate)];
        write_pairs(&path, &pairs).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text.trim(),
            r#"{"left":"a.png","right":"b.png","label":"duplicate","origin":"real"}"#
        );
        assert_eq!(read_pairs(&path).unwrap(), pairs);
        std::fs::write(&path, "{\"left\":1}\n").unwrap();
        assert!(matches!(
            read_pairs(&path),
            Err(CalibrationError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn saved_benchmark_reloads() {
        let b = generate_benchmark(&seeds(3), 6, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let pairs_path = b.save(dir.path()).unwrap();
        let pairs = read_pairs(&pairs_path).unwrap();
        let (store, missing) =
            DescriptorStore::load_refs(dir.path(), &pairs, DescriptorOptions::default());
        assert!(missing.is_empty());
        let direct = DescriptorStore::from_images(&b.images, DescriptorOptions::default());
        for p in &pairs {
            assert_eq!(store.get(&p.right), direct.get(&p.right));
        }
    }
}
