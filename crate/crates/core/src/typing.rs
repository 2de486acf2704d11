//! Category routing and per-category image-type classification.
//!
//! Every category carries a [`CategoryProfile`] (expected image types with
//! priorities and caps) and a [`TypeClassifier`]. The bundled classifier is a
//! nearest-centroid model over a 576-value feature: the 512-bin HSV histogram
//! and an 8x8 luma grid, each L2-normalized.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descriptor::{hsv_histogram, HISTOGRAM_BINS};
use crate::raster::{resize_luma, to_grayscale, RasterImage};

pub const LUMA_GRID_VALUES: usize = 64;
pub const FEATURE_LEN: usize = HISTOGRAM_BINS + LUMA_GRID_VALUES;
pub const SOFTMAX_TEMPERATURE: f64 = 0.1;
pub const MODEL_FORMAT: &str = "imgsel-type-centroids/1";

#[derive(Debug, Error)]
pub enum TypingError {
    #[error("no registered category matches item (category {category:?}, title {title:?})")]
    Unrouted {
        category: Option<String>,
        title: Option<String>,
    },
    #[error("category registry is empty")]
    EmptyRegistry,
    #[error("profile {category}: {message}")]
    InvalidProfile { category: String, message: String },
    #[error("no training examples for classes {0:?}")]
    MissingClasses(Vec<String>),
    #[error("example label {0:?} is not declared in the profile")]
    UnknownLabel(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TypeSpec {
    pub label: String,
    /// 1 is shown first.
    pub priority: u32,
    pub max_count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategoryProfile {
    pub category_id: String,
    /// Title words that route an item here; derived from `category_id` when empty.
    #[serde(default)]
    pub keywords: Vec<String>,
    pub types: Vec<TypeSpec>,
}

impl CategoryProfile {
    pub fn validate(&self) -> Result<(), TypingError> {
        let invalid = |message: &str| TypingError::InvalidProfile {
            category: self.category_id.clone(),
            message: message.to_string(),
        };
        if self.category_id.is_empty() {
            return Err(invalid("empty category_id"));
        }
        if self.types.is_empty() {
            return Err(invalid("no image types declared"));
        }
        let mut labels = HashSet::new();
        let mut priorities = HashSet::new();
        for t in &self.types {
            if !labels.insert(t.label.as_str()) {
                return Err(invalid(&format!("duplicate label {:?}", t.label)));
            }
            if !priorities.insert(t.priority) {
                return Err(invalid(&format!("duplicate priority {}", t.priority)));
            }
            if t.priority == 0 || t.max_count == 0 {
                return Err(invalid(&format!(
                    "type {:?} needs priority and max_count >= 1",
                    t.label
                )));
            }
        }
        Ok(())
    }

    pub fn spec(&self, label: &str) -> Option<&TypeSpec> {
        self.types.iter().find(|t| t.label == label)
    }

    pub fn max_priority(&self) -> u32 {
        self.types.iter().map(|t| t.priority).max().unwrap_or(0)
    }

    /// Routing keywords, lowercase. Without explicit keywords, the
    /// `_`-separated parts of the category id and their singular forms.
    pub fn routing_keywords(&self) -> BTreeSet<String> {
        if !self.keywords.is_empty() {
            return self.keywords.iter().map(|k| k.to_lowercase()).collect();
        }
        let mut out = BTreeSet::new();
        for part in self
            .category_id
            .to_lowercase()
            .split(|c: char| !c.is_alphanumeric())
        {
            if part.is_empty() {
                continue;
            }
            out.insert(part.to_string());
            if let Some(singular) = part.strip_suffix('s').filter(|s| !s.is_empty()) {
                out.insert(singular.to_string());
            }
        }
        out
    }
}

/// File form of a set of profiles: `[[profiles]]` tables in TOML.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileFile {
    pub profiles: Vec<CategoryProfile>,
}

impl ProfileFile {
    pub fn parse(text: &str) -> Result<Self, TypingError> {
        let file: ProfileFile = toml::from_str(text).map_err(|e| TypingError::InvalidProfile {
            category: "<file>".into(),
            message: e.to_string(),
        })?;
        let mut seen = HashSet::new();
        for p in &file.profiles {
            p.validate()?;
            if !seen.insert(p.category_id.clone()) {
                return Err(TypingError::InvalidProfile {
                    category: p.category_id.clone(),
                    message: "declared twice".into(),
                });
            }
        }
        Ok(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TypingError> {
        Self::parse(&read_text(path.as_ref())?)
    }
}

fn read_text(path: &Path) -> Result<String, TypingError> {
    std::fs::read_to_string(path).map_err(|e| TypingError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypePrediction {
    pub label: String,
    pub confidence: f64,
}

/// Per-category image-type classifier.
pub trait TypeClassifier: Send + Sync {
    fn classes(&self) -> &[String];
    fn classify(&self, img: &RasterImage) -> TypePrediction;
}

fn l2_normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Histogram ++ 8x8 luma grid, each part L2-normalized.
pub fn type_features(img: &RasterImage) -> Vec<f64> {
    let mut hist = hsv_histogram(img).bins().to_vec();
    l2_normalize(&mut hist);
    let grid = resize_luma(&to_grayscale(img), 8, 8).expect("8x8 is non-zero");
    let mut luma = grid.values().to_vec();
    l2_normalize(&mut luma);
    hist.extend(luma);
    hist
}

fn normalize_parts(v: &mut [f64]) {
    let (hist, luma) = v.split_at_mut(HISTOGRAM_BINS);
    l2_normalize(hist);
    l2_normalize(luma);
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Softmax over `scores / temperature`, computed with the max subtracted.
pub fn softmax(scores: &[f64], temperature: f64) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores
        .iter()
        .map(|s| ((s - max) / temperature).exp())
        .collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TypeClassifierModel {
    pub format: String,
    pub category_id: String,
    pub classes: Vec<String>,
    pub centroids: Vec<Vec<f64>>,
    pub training_count: Vec<usize>,
}

impl TypeClassifierModel {
    pub fn validate(&self) -> Result<(), TypingError> {
        let bad = |m: String| Err(TypingError::InvalidModel(m));
        if self.format != MODEL_FORMAT {
            return bad(format!("unsupported format tag {:?}", self.format));
        }
        if self.classes.is_empty() {
            return bad("no classes".into());
        }
        if self.centroids.len() != self.classes.len()
            || self.training_count.len() != self.classes.len()
        {
            return bad("classes, centroids and training_count lengths differ".into());
        }
        if let Some(c) = self.centroids.iter().find(|c| c.len() != FEATURE_LEN) {
            return bad(format!(
                "centroid has {} values, expected {FEATURE_LEN}",
                c.len()
            ));
        }
        Ok(())
    }

    /// Checks that every class is declared by `profile`.
    pub fn check_against(&self, profile: &CategoryProfile) -> Result<(), TypingError> {
        match self.classes.iter().find(|c| profile.spec(c).is_none()) {
            Some(c) => Err(TypingError::UnknownLabel(c.clone())),
            None => Ok(()),
        }
    }

    pub fn similarities(&self, features: &[f64]) -> Vec<f64> {
        self.centroids
            .iter()
            .map(|c| cosine_similarity(features, c))
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("models serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, TypingError> {
        let model: Self =
            serde_json::from_str(text).map_err(|e| TypingError::InvalidModel(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TypingError> {
        Self::from_json(&read_text(path.as_ref())?)
    }
}

impl TypeClassifier for TypeClassifierModel {
    fn classes(&self) -> &[String] {
        &self.classes
    }

    fn classify(&self, img: &RasterImage) -> TypePrediction {
        let sims = self.similarities(&type_features(img));
        let probs = softmax(&sims, SOFTMAX_TEMPERATURE);
        // first maximal similarity wins ties
        let best = sims
            .iter()
            .enumerate()
            .fold(0, |best, (i, s)| if *s > sims[best] { i } else { best });
        TypePrediction {
            label: self.classes[best].clone(),
            confidence: probs[best],
        }
    }
}

/// Mean feature per profile class, re-normalized. Classes follow the profile's
/// declaration order; every declared class needs at least one example.
pub fn train_centroid_classifier(
    examples: &[(RasterImage, String)],
    profile: &CategoryProfile,
) -> Result<TypeClassifierModel, TypingError> {
    profile.validate()?;
    if let Some((_, label)) = examples.iter().find(|(_, l)| profile.spec(l).is_none()) {
        return Err(TypingError::UnknownLabel(label.clone()));
    }
    let classes: Vec<String> = profile.types.iter().map(|t| t.label.clone()).collect();
    let mut sums = vec![vec![0.0; FEATURE_LEN]; classes.len()];
    let mut counts = vec![0usize; classes.len()];
    for (img, label) in examples {
        let k = classes
            .iter()
            .position(|c| c == label)
            .expect("label checked above");
        for (s, f) in sums[k].iter_mut().zip(type_features(img)) {
            *s += f;
        }
        counts[k] += 1;
    }
    let missing: Vec<String> = classes
        .iter()
        .zip(&counts)
        .filter(|(_, &n)| n == 0)
        .map(|(c, _)| c.clone())
        .collect();
    if !missing.is_empty() {
        return Err(TypingError::MissingClasses(missing));
    }
    for (sum, &n) in sums.iter_mut().zip(&counts) {
        sum.iter_mut().for_each(|v| *v /= n as f64);
        normalize_parts(sum);
    }
    Ok(TypeClassifierModel {
        format: MODEL_FORMAT.into(),
        category_id: profile.category_id.clone(),
        classes,
        centroids: sums,
        training_count: counts,
    })
}

#[derive(Clone)]
pub struct CategoryEntry {
    pub profile: CategoryProfile,
    pub classifier: Arc<dyn TypeClassifier>,
}

impl std::fmt::Debug for CategoryEntry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CategoryEntry")
            .field("profile", &self.profile)
            .field("classes", &self.classifier.classes())
            .finish()
    }
}

/// Category id to profile + classifier.
#[derive(Debug, Clone, Default)]
pub struct CategoryRegistry {
    entries: BTreeMap<String, CategoryEntry>,
}

impl CategoryRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(
        &mut self,
        profile: CategoryProfile,
        classifier: Arc<dyn TypeClassifier>,
    ) -> Result<(), TypingError> {
        profile.validate()?;
        if let Some(c) = classifier
            .classes()
            .iter()
            .find(|c| profile.spec(c).is_none())
        {
            return Err(TypingError::UnknownLabel(c.clone()));
        }
        self.entries.insert(
            profile.category_id.clone(),
            CategoryEntry {
                profile,
                classifier,
            },
        );
        Ok(())
    }

    pub fn get(&self, category_id: &str) -> Option<&CategoryEntry> {
        self.entries.get(category_id)
    }

    pub fn categories(&self) -> Vec<String> {
        self.entries.keys().cloned().collect()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Joins profiles with centroid models by category id.
    pub fn from_parts(
        profiles: ProfileFile,
        models: Vec<TypeClassifierModel>,
    ) -> Result<Self, TypingError> {
        let mut by_id: BTreeMap<String, TypeClassifierModel> = models
            .into_iter()
            .map(|m| (m.category_id.clone(), m))
            .collect();
        let mut registry = Self::new();
        for profile in profiles.profiles {
            let model = by_id.remove(&profile.category_id).ok_or_else(|| {
                TypingError::InvalidModel(format!(
                    "no model for category {:?}",
                    profile.category_id
                ))
            })?;
            model.validate()?;
            registry.insert(profile, Arc::new(model))?;
        }
        if let Some(orphan) = by_id.keys().next() {
            return Err(TypingError::InvalidModel(format!(
                "model for undeclared category {orphan:?}"
            )));
        }
        Ok(registry)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemKey {
    pub category_id: Option<String>,
    pub title: Option<String>,
}

/// A registered explicit category wins; otherwise the category whose routing
/// keywords match the most title words (ties by category id).
pub fn route_category(item: &ItemKey, registry: &CategoryRegistry) -> Result<String, TypingError> {
    if registry.is_empty() {
        return Err(TypingError::EmptyRegistry);
    }
    if let Some(id) = item.category_id.as_deref() {
        if registry.get(id).is_some() {
            return Ok(id.to_string());
        }
    }
    if let Some(title) = item.title.as_deref() {
        let lower = title.to_lowercase();
        let words: HashSet<&str> = lower
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .collect();
        let mut best: Option<(usize, &str)> = None;
        for (id, entry) in &registry.entries {
            let hits = entry
                .profile
                .routing_keywords()
                .iter()
                .filter(|k| words.contains(k.as_str()) || words.contains(format!("{k}s").as_str()))
                .count();
            if hits > 0 && best.is_none_or(|(n, _)| hits > n) {
                best = Some((hits, id));
            }
        }
        if let Some((_, id)) = best {
            return Ok(id.to_string());
        }
    }
    Err(TypingError::Unrouted {
        category: item.category_id.clone(),
        title: item.title.clone(),
    })
}

/// Classifies each item and groups stably by predicted label.
pub fn group_by_type<T>(
    items: Vec<T>,
    classifier: &dyn TypeClassifier,
    image_of: impl Fn(&T) -> &RasterImage,
) -> BTreeMap<String, Vec<(T, TypePrediction)>> {
    let mut groups: BTreeMap<String, Vec<(T, TypePrediction)>> = BTreeMap::new();
    for item in items {
        let prediction = classifier.classify(image_of(&item));
        groups
            .entry(prediction.label.clone())
            .or_default()
            .push((item, prediction));
    }
    groups
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn profile(id: &str, labels: &[&str]) -> CategoryProfile {
        CategoryProfile {
            category_id: id.into(),
            keywords: vec![],
            types: labels
                .iter()
                .enumerate()
                .map(|(i, l)| TypeSpec {
                    label: l.to_string(),
                    priority: i as u32 + 1,
                    max_count: 1,
                })
                .collect(),
        }
    }

    fn solid(c: [u8; 3]) -> RasterImage {
        RasterImage::filled(20, 20, c).unwrap()
    }

    fn red_blue_model() -> TypeClassifierModel {
        let examples = vec![
            (solid([220, 20, 20]), "front".to_string()),
            (solid([20, 20, 220]), "back".to_string()),
        ];
        train_centroid_classifier(&examples, &profile("shirts", &["front", "back"])).unwrap()
    }

    fn registry_with(ids: &[&str]) -> CategoryRegistry {
        let mut r = CategoryRegistry::new();
        for id in ids {
            let p = profile(id, &["front", "back"]);
            let mut m = red_blue_model();
            m.category_id = id.to_string();
            r.insert(p, Arc::new(m)).unwrap();
        }
        r
    }

    #[test]
    fn routing() {
        let r = registry_with(&["tablets", "tablet_computers", "sofas"]);
        let explicit = ItemKey {
            category_id: Some("tablets".into()),
            title: None,
        };
        assert_eq!(route_category(&explicit, &r).unwrap(), "tablets");

        let r = registry_with(&["tablet_computers", "sofas"]);
        let titled = ItemKey {
            category_id: None,
            title: Some("10-inch Android tablet computer".into()),
        };
        assert_eq!(route_category(&titled, &r).unwrap(), "tablet_computers");

        let lost = ItemKey {
            category_id: None,
            title: Some("garden hose".into()),
        };
        assert!(matches!(
            route_category(&lost, &r),
            Err(TypingError::Unrouted { .. })
        ));
        assert!(matches!(
            route_category(&lost, &CategoryRegistry::new()),
            Err(TypingError::EmptyRegistry)
        ));
    }

    #[test]
    fn profile_validation() {
        let mut p = profile("x", &["a", "b"]);
        assert!(p.validate().is_ok());
        p.types[1].priority = 1;
        assert!(p.validate().is_err());
        let mut p = profile("x", &["a", "a"]);
        p.types[1].priority = 5;
        assert!(p.validate().is_err());
    }

    #[test]
    fn profile_file_parses() {
        let text = r#"
            [[profiles]]
            category_id = "tablets"
            keywords = ["tablet", "ipad"]
            types = [
              { label = "front", priority = 1, max_count = 1 },
              { label = "back", priority = 2, max_count = 2 },
            ]
        "#;
        let file = ProfileFile::parse(text).unwrap();
        assert_eq!(file.profiles[0].types[1].max_count, 2);
        assert!(ProfileFile::parse("[[profiles]]\ncategory_id = \"x\"\ntypes = []\n").is_err());
    }

    #[test]
    fn one_example_per_class_gives_its_features() {
        let model = red_blue_model();
        let red = type_features(&solid([220, 20, 20]));
        for (a, b) in model.centroids[0].iter().zip(&red) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }
        assert_eq!(model.training_count, vec![1, 1]);
    }

    #[test]
    fn duplicated_examples_leave_model_unchanged() {
        let p = profile("shirts", &["front", "back"]);
        let ex = vec![
            (solid([220, 20, 20]), "front".to_string()),
            (solid([200, 40, 30]), "front".to_string()),
            (solid([20, 20, 220]), "back".to_string()),
        ];
        let once = train_centroid_classifier(&ex, &p).unwrap();
        let twice = train_centroid_classifier(&[ex.clone(), ex].concat(), &p).unwrap();
        for (a, b) in once
            .centroids
            .iter()
            .flatten()
            .zip(twice.centroids.iter().flatten())
        {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }
    }

    #[test]
    fn missing_class_reported() {
        let p = profile("shirts", &["front", "back", "side"]);
        let ex = vec![(solid([220, 20, 20]), "front".to_string())];
        match train_centroid_classifier(&ex, &p) {
            Err(TypingError::MissingClasses(m)) => {
                assert_eq!(m, vec!["back".to_string(), "side".into()])
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn separable_holdout_is_perfect() {
        let model = red_blue_model();
        // same hue/saturation/value bins as the training colors
        for (r, g, b) in [(195u8, 12u8, 10u8), (210, 18, 15), (222, 5, 5)] {
            assert_eq!(model.classify(&solid([r, g, b])).label, "front");
            assert_eq!(model.classify(&solid([b, g, r])).label, "back");
        }
        let p = model.classify(&solid([220, 20, 20]));
        assert!(p.confidence > 0.5 && p.confidence <= 1.0);
    }

    #[test]
    fn softmax_is_a_distribution() {
        let p = softmax(&[0.2, 0.9, -0.4], SOFTMAX_TEMPERATURE);
        assert_abs_diff_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(p.iter().all(|x| (0.0..=1.0).contains(x)));
        assert!(p[1] > p[0] && p[0] > p[2]);
    }

    #[test]
    fn model_json_roundtrip_and_tag() {
        let model = red_blue_model();
        let back = TypeClassifierModel::from_json(&model.to_json()).unwrap();
        assert_eq!(model, back);
        let mut wrong = model.clone();
        wrong.format = "other/9".into();
        assert!(TypeClassifierModel::from_json(&wrong.to_json()).is_err());
    }

    #[test]
    fn grouping_is_stable() {
        let model = red_blue_model();
        let items = vec![
            ("r1", solid([220, 0, 0])),
            ("b1", solid([0, 0, 220])),
            ("r2", solid([180, 0, 0])),
        ];
        let groups = group_by_type(items, &model, |(_, img)| img);
        let front: Vec<_> = groups["front"].iter().map(|((id, _), _)| *id).collect();
        assert_eq!(front, vec!["r1", "r2"]);
        assert_eq!(groups["back"].len(), 1);
        let empty: Vec<(&str, RasterImage)> = vec![];
        assert!(group_by_type(empty, &model, |(_, img)| img).is_empty());
    }
}
