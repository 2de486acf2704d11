//! Pairwise duplicate/different decisions.
//!
//! The ensemble is a unanimous vote of three component comparators (pHash,
//! edge-enhanced dHash and the HSV histogram): a pair is a duplicate only if
//! every component says so. Distances equal to a threshold count as duplicate.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descriptor::{chi_square, hamming, DescriptorOptions, ImageDescriptor};

#[derive(Debug, Error, PartialEq)]
pub enum CompareError {
    #[error("unknown comparison method {0:?}")]
    UnknownMethod(String),
    #[error("raw_cosine needs pixel thumbnails, which deserialized descriptors do not carry")]
    MissingThumbnail,
    #[error("invalid comparator config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComparatorConfig {
    pub phash_threshold: u32,
    pub dhash_threshold: u32,
    pub hist_threshold: f64,
    pub edge_enhance_dhash: bool,
}

impl Default for ComparatorConfig {
    fn default() -> Self {
        Self {
            phash_threshold: 10,
            dhash_threshold: 20,
            hist_threshold: 0.3,
            edge_enhance_dhash: true,
        }
    }
}

impl ComparatorConfig {
    pub fn validate(&self) -> Result<(), CompareError> {
        if self.phash_threshold > 64 || self.dhash_threshold > 64 {
            return Err(CompareError::InvalidConfig(
                "bit thresholds must lie in [0, 64]".into(),
            ));
        }
        if !(self.hist_threshold >= 0.0) {
            return Err(CompareError::InvalidConfig(
                "hist_threshold must be non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn descriptor_options(&self) -> DescriptorOptions {
        DescriptorOptions {
            edge_enhance_dhash: self.edge_enhance_dhash,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ahash,
    Phash,
    Dhash,
    Whash,
    Histogram,
    RawCosine,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Ahash,
        Method::Phash,
        Method::Dhash,
        Method::Whash,
        Method::Histogram,
        Method::RawCosine,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Ahash => "ahash",
            Method::Phash => "phash",
            Method::Dhash => "dhash",
            Method::Whash => "whash",
            Method::Histogram => "histogram",
            Method::RawCosine => "raw_cosine",
        }
    }

    pub fn is_hash(&self) -> bool {
        matches!(
            self,
            Method::Ahash | Method::Phash | Method::Dhash | Method::Whash
        )
    }

    /// Distance between two descriptors under this method.
    pub fn distance(&self, a: &ImageDescriptor, b: &ImageDescriptor) -> Result<f64, CompareError> {
        Ok(match self {
            Method::Ahash => hamming(a.ahash, b.ahash) as f64,
            Method::Phash => hamming(a.phash, b.phash) as f64,
            Method::Dhash => hamming(a.dhash, b.dhash) as f64,
            Method::Whash => hamming(a.whash, b.whash) as f64,
            Method::Histogram => chi_square(&a.histogram, &b.histogram),
            Method::RawCosine => {
                let (ta, tb) = match (&a.thumbnail, &b.thumbnail) {
                    (Some(ta), Some(tb)) => (ta, tb),
                    _ => return Err(CompareError::MissingThumbnail),
                };
                cosine_distance(ta.values(), tb.values())
            }
        })
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = CompareError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| CompareError::UnknownMethod(s.to_string()))
    }
}

/// `1 - cos(a, b)`; two all-zero vectors are identical, one all-zero vector
/// is maximally distant.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 && nb == 0.0 {
        return 0.0;
    }
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    (1.0 - dot / (na * nb)).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentVerdict {
    pub name: Method,
    pub distance: f64,
    pub threshold: f64,
    pub is_duplicate: bool,
}

impl ComponentVerdict {
    fn new(name: Method, distance: f64, threshold: f64) -> Self {
        Self {
            name,
            distance,
            threshold,
            is_duplicate: distance <= threshold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Duplicate,
    Different,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparatorReport {
    pub components: [ComponentVerdict; 3],
    pub r#final: Decision,
}

impl ComparatorReport {
    pub fn is_duplicate(&self) -> bool {
        self.r#final == Decision::Duplicate
    }
}

pub fn compare(
    a: &ImageDescriptor,
    b: &ImageDescriptor,
    cfg: &ComparatorConfig,
) -> ComparatorReport {
    let components = [
        ComponentVerdict::new(
            Method::Phash,
            hamming(a.phash, b.phash) as f64,
            cfg.phash_threshold as f64,
        ),
        ComponentVerdict::new(
            Method::Dhash,
            hamming(a.dhash, b.dhash) as f64,
            cfg.dhash_threshold as f64,
        ),
        ComponentVerdict::new(
            Method::Histogram,
            chi_square(&a.histogram, &b.histogram),
            cfg.hist_threshold,
        ),
    ];
    let r#final = if components.iter().all(|c| c.is_duplicate) {
        Decision::Duplicate
    } else {
        Decision::Different
    };
    ComparatorReport {
        components,
        r#final,
    }
}

/// Shorthand for `compare(..).is_duplicate()` that stops at the first
/// dissenting component.
pub fn is_duplicate(a: &ImageDescriptor, b: &ImageDescriptor, cfg: &ComparatorConfig) -> bool {
    hamming(a.phash, b.phash) <= cfg.phash_threshold
        && hamming(a.dhash, b.dhash) <= cfg.dhash_threshold
        && chi_square(&a.histogram, &b.histogram) <= cfg.hist_threshold
}

pub fn compare_single(
    a: &ImageDescriptor,
    b: &ImageDescriptor,
    method: Method,
    threshold: f64,
) -> Result<ComponentVerdict, CompareError> {
    Ok(ComponentVerdict::new(
        method,
        method.distance(a, b)?,
        threshold,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::{compute_descriptor, BitHash64};
    use crate::raster::RasterImage;
    use proptest::prelude::*;

    fn textured(seed: u32) -> RasterImage {
        RasterImage::from_fn(64, 48, |x, y| {
            let v = ((x * 7 + y * 13 + seed * 31) % 255) as u8;
            [v, v / 2, 255 - v]
        })
        .unwrap()
    }

    #[test]
    fn identical_descriptors_are_duplicates() {
        let d = compute_descriptor(&textured(3));
        let report = compare(&d, &d, &ComparatorConfig::default());
        assert!(report.is_duplicate());
        assert!(report.components.iter().all(|c| c.distance == 0.0));
    }

    #[test]
    fn phash_over_threshold_decides_different() {
        let a = compute_descriptor(&textured(1));
        let mut b = a.clone();
        b.phash = BitHash64(a.phash.0 ^ 0x7ff); // 11 flipped bits
        let report = compare(&a, &b, &ComparatorConfig::default());
        assert_eq!(report.components[0].distance, 11.0);
        assert_eq!(report.r#final, Decision::Different);
        assert!(report.components[1].is_duplicate && report.components[2].is_duplicate);
    }

    #[test]
    fn distance_equal_to_threshold_is_duplicate() {
        let a = compute_descriptor(&textured(1));
        let mut b = a.clone();
        b.phash = BitHash64(a.phash.0 ^ 0x3ff); // exactly 10
        assert!(compare(&a, &b, &ComparatorConfig::default()).is_duplicate());
    }

    #[test]
    fn single_methods() {
        let d = compute_descriptor(&textured(5));
        for m in Method::ALL {
            let v = compare_single(&d, &d, m, 0.0).unwrap();
            assert_eq!(v.distance, 0.0, "{m}");
            assert!(v.is_duplicate);
        }
        assert_eq!(
            "cosine".parse::<Method>(),
            Err(CompareError::UnknownMethod("cosine".into()))
        );
        let stripped = ImageDescriptor::from_json(&d.to_json()).unwrap();
        assert_eq!(
            compare_single(&stripped, &d, Method::RawCosine, 0.1),
            Err(CompareError::MissingThumbnail)
        );
    }

    #[test]
    fn config_validation() {
        assert!(ComparatorConfig::default().validate().is_ok());
        let bad = ComparatorConfig {
            phash_threshold: 65,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ComparatorConfig {
            hist_threshold: -0.1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn symmetric_and_monotone(s1 in 0u32..50, s2 in 0u32..50, p in 0u32..64, d in 0u32..64, h in 0.0f64..2.5, bump in 0u32..10) {
            let a = compute_descriptor(&textured(s1));
            let b = compute_descriptor(&textured(s2));
            let cfg = ComparatorConfig { phash_threshold: p, dhash_threshold: d, hist_threshold: h, edge_enhance_dhash: true };
            let ab = compare(&a, &b, &cfg);
            prop_assert_eq!(ab.r#final, compare(&b, &a, &cfg).r#final);
            prop_assert_eq!(ab.is_duplicate(), is_duplicate(&a, &b, &cfg));
            if ab.is_duplicate() {
                prop_assert!(ab.components.iter().all(|c| c.is_duplicate));
                let looser = ComparatorConfig {
                    phash_threshold: (p + bump).min(64),
                    dhash_threshold: (d + bump).min(64),
                    hist_threshold: h + bump as f64 * 0.1,
                    ..cfg
                };
                prop_assert!(compare(&a, &b, &looser).is_duplicate());
            }
        }
    }
}
