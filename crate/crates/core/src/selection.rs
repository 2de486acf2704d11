//! End-to-end image selection for one catalog item: aggregate supplier
//! images, gate them on quality, classify them into types, collapse
//! near-duplicates and order what remains.
//!
//! Every aggregated input ends up exactly once in either
//! [`SelectionResult::ordered`] or [`SelectionResult::removed`].

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::comparator::ComparatorConfig;
use crate::dedup::{dedupe_groups, TypedImage};
use crate::descriptor::compute_descriptor_with;
use crate::quality::{quality_gate, PluginHost, QualityConfig};
use crate::raster::RasterImage;
use crate::typing::{route_category, CategoryProfile, CategoryRegistry, ItemKey};

/// Type label used for images that bypass classification.
pub const UNCLASSIFIED: &str = "unclassified";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageSource {
    /// URL or path the bytes came from.
    pub location: String,
    pub bytes: Arc<[u8]>,
}

impl ImageSource {
    pub fn new(location: impl Into<String>, bytes: impl Into<Arc<[u8]>>) -> Self {
        Self {
            location: location.into(),
            bytes: bytes.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupplierImages {
    pub supplier: String,
    pub images: Vec<ImageSource>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourcedImage {
    pub image_id: String,
    pub location: String,
    pub supplier: String,
    pub fetch_order: usize,
    pub bytes_digest: String,
    pub bytes: Arc<[u8]>,
}

#[derive(Debug, Clone, Default)]
pub struct CatalogItem {
    pub item_id: String,
    pub category_id: Option<String>,
    pub title: Option<String>,
    pub sources: Vec<SupplierImages>,
    /// Manually curated items are passed through untouched.
    pub curated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalReason {
    QualityFail,
    ComplianceFail,
    ExactDuplicate,
    NearDuplicate,
    TypeCap,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Removal {
    pub image_id: String,
    pub reason: RemovalReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderedImage {
    pub image_id: String,
    pub type_label: String,
    pub cluster_id: String,
    pub rank: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageStats {
    pub inputs: usize,
    pub aggregated: usize,
    pub exact_duplicates: usize,
    pub quality_failed: usize,
    pub compliance_failed: usize,
    pub type_groups: usize,
    pub clusters: usize,
    pub near_duplicates: usize,
    pub type_capped: usize,
    pub selected: usize,
    pub unrouted: bool,
    pub bypassed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub item_id: String,
    pub ordered: Vec<OrderedImage>,
    pub removed: Vec<Removal>,
    pub stats: StageStats,
}

impl SelectionResult {
    pub fn ordered_ids(&self) -> Vec<&str> {
        self.ordered.iter().map(|o| o.image_id.as_str()).collect()
    }

    pub fn removed_with(&self, reason: RemovalReason) -> Vec<&str> {
        self.removed
            .iter()
            .filter(|r| r.reason == reason)
            .map(|r| r.image_id.as_str())
            .collect()
    }

    /// Plain-text table for terminals.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "item {}", self.item_id);
        let _ = writeln!(out, "{:>4}  {:<16} {:<20} image", "rank", "type", "cluster");
        for o in &self.ordered {
            let _ = writeln!(
                out,
                "{:>4}  {:<16} {:<20} {}",
                o.rank, o.type_label, o.cluster_id, o.image_id
            );
        }
        if !self.removed.is_empty() {
            let _ = writeln!(out, "removed:");
            for r in &self.removed {
                let reason = serde_json::to_value(r.reason).ok();
                let reason = reason.as_ref().and_then(|v| v.as_str()).unwrap_or("?");
                let _ = writeln!(
                    out,
                    "      {:<16} {}{}",
                    reason,
                    r.image_id,
                    r.detail
                        .as_deref()
                        .map(|d| format!("  ({d})"))
                        .unwrap_or_default()
                );
            }
        }
        let s = &self.stats;
        let _ = writeln!(
            out,
            "inputs {} -> selected {} (exact dup {}, quality {}, compliance {}, near dup {}, capped {}){}{}",
            s.inputs,
            s.selected,
            s.exact_duplicates,
            s.quality_failed,
            s.compliance_failed,
            s.near_duplicates,
            s.type_capped,
            if s.unrouted { " [unrouted]" } else { "" },
            if s.bypassed { " [bypassed]" } else { "" },
        );
        out
    }
}

pub fn digest_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Default)]
pub struct Aggregation {
    pub images: Vec<SourcedImage>,
    pub removed: Vec<Removal>,
}

/// Flattens supplier lists in (supplier, position) order and drops
/// byte-identical repeats, keeping the first occurrence.
pub fn aggregate(sources: &[SupplierImages]) -> Aggregation {
    let mut out = Aggregation::default();
    let mut seen_digest: HashMap<String, String> = HashMap::new();
    let mut used_ids: HashSet<String> = HashSet::new();
    let mut fetch_order = 0;
    for supplier in sources {
        for src in &supplier.images {
            let digest = digest_hex(&src.bytes);
            let mut image_id = src.location.clone();
            if used_ids.contains(&image_id) {
                image_id = format!("{}#{fetch_order}", src.location);
            }
            used_ids.insert(image_id.clone());
            match seen_digest.get(&digest) {
                Some(first) => out.removed.push(Removal {
                    image_id,
                    reason: RemovalReason::ExactDuplicate,
                    detail: Some(format!("same bytes as {first}")),
                }),
                None => {
                    seen_digest.insert(digest.clone(), image_id.clone());
                    out.images.push(SourcedImage {
                        image_id,
                        location: src.location.clone(),
                        supplier: supplier.supplier.clone(),
                        fetch_order,
                        bytes_digest: digest,
                        bytes: src.bytes.clone(),
                    });
                }
            }
            fetch_order += 1;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankCandidate {
    pub image_id: String,
    pub type_label: String,
    /// Count of earlier candidates with the same label.
    pub occurrence_index: u32,
}

/// Assigns occurrence indices to `(image_id, label)` pairs in list order.
pub fn with_occurrence_indices<'a>(
    items: impl IntoIterator<Item = (&'a str, &'a str)>,
) -> Vec<RankCandidate> {
    let mut seen: HashMap<&str, u32> = HashMap::new();
    items
        .into_iter()
        .map(|(id, label)| {
            let n = seen.entry(label).or_default();
            let c = RankCandidate {
                image_id: id.to_string(),
                type_label: label.to_string(),
                occurrence_index: *n,
            };
            *n += 1;
            c
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OrderOutcome {
    pub ordered: Vec<RankCandidate>,
    pub capped: Vec<RankCandidate>,
}

/// The `(occurrence_index, priority, position)` key used by [`order_images`].
pub fn order_key(
    c: &RankCandidate,
    position: usize,
    profile: &CategoryProfile,
) -> (u32, u32, usize) {
    let priority = profile
        .spec(&c.type_label)
        .map(|s| s.priority)
        .unwrap_or(profile.max_priority() + 1);
    (c.occurrence_index, priority, position)
}

/// Stable sort by occurrence, then type priority, then input position.
/// Labels unknown to the profile rank after every declared type and are
/// never capped.
pub fn order_images(candidates: &[RankCandidate], profile: &CategoryProfile) -> OrderOutcome {
    let mut keyed: Vec<((u32, u32, usize), &RankCandidate)> = candidates
        .iter()
        .enumerate()
        .map(|(i, c)| (order_key(c, i, profile), c))
        .collect();
    keyed.sort_by_key(|(k, _)| *k);
    let mut out = OrderOutcome::default();
    for (_, c) in keyed {
        let capped = profile
            .spec(&c.type_label)
            .is_some_and(|s| c.occurrence_index >= s.max_count);
        if capped {
            out.capped.push(c.clone());
        } else {
            out.ordered.push(c.clone());
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineOptions {
    pub quality_gate: bool,
    pub reorder: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            quality_gate: true,
            reorder: true,
        }
    }
}

#[derive(Debug, Default)]
pub struct PipelineDeps {
    pub registry: CategoryRegistry,
    pub comparator: ComparatorConfig,
    pub quality: QualityConfig,
    pub plugins: PluginHost,
    pub options: PipelineOptions,
}

/// Milliseconds spent per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub aggregate_ms: f64,
    pub analyze_ms: f64,
    pub dedup_ms: f64,
    pub order_ms: f64,
    pub total_ms: f64,
}

fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1000.0
}

fn pass_through(
    item_id: &str,
    images: &[SourcedImage],
    removed: Vec<Removal>,
    mut stats: StageStats,
) -> SelectionResult {
    let ordered: Vec<OrderedImage> = images
        .iter()
        .enumerate()
        .map(|(i, img)| OrderedImage {
            image_id: img.image_id.clone(),
            type_label: UNCLASSIFIED.into(),
            cluster_id: format!("{UNCLASSIFIED}#{i}"),
            rank: i + 1,
        })
        .collect();
    stats.selected = ordered.len();
    SelectionResult {
        item_id: item_id.to_string(),
        ordered,
        removed,
        stats,
    }
}

struct Analyzed {
    image: SourcedImage,
    raster: RasterImage,
    descriptor: crate::descriptor::ImageDescriptor,
    label: String,
}

pub fn run_pipeline(item: &CatalogItem, deps: &PipelineDeps) -> SelectionResult {
    run_pipeline_timed(item, deps).0
}

pub fn run_pipeline_timed(
    item: &CatalogItem,
    deps: &PipelineDeps,
) -> (SelectionResult, StageTimings) {
    let start = Instant::now();
    let mut timings = StageTimings::default();

    let t = Instant::now();
    let Aggregation {
        images,
        mut removed,
    } = aggregate(&item.sources);
    let mut stats = StageStats {
        inputs: images.len() + removed.len(),
        aggregated: images.len(),
        exact_duplicates: removed.len(),
        ..Default::default()
    };
    timings.aggregate_ms = elapsed_ms(t);

    if item.curated || images.len() <= 1 {
        stats.bypassed = true;
        let result = pass_through(&item.item_id, &images, removed, stats);
        timings.total_ms = elapsed_ms(start);
        return (result, timings);
    }

    let key = ItemKey {
        category_id: item.category_id.clone(),
        title: item.title.clone(),
    };
    let category = match route_category(&key, &deps.registry) {
        Ok(c) => c,
        Err(e) => {
            log::warn!("item {}: {e}; passing images through", item.item_id);
            stats.unrouted = true;
            let result = pass_through(&item.item_id, &images, removed, stats);
            timings.total_ms = elapsed_ms(start);
            return (result, timings);
        }
    };
    stats.category_id = Some(category.clone());
    let entry = deps
        .registry
        .get(&category)
        .expect("routed categories are registered");

    let t = Instant::now();
    let descriptor_options = deps.comparator.descriptor_options();
    let analyzed: Vec<Result<Analyzed, Removal>> = images
        .into_par_iter()
        .map(|image| {
            let raster = RasterImage::decode(&image.bytes).map_err(|e| Removal {
                image_id: image.image_id.clone(),
                reason: RemovalReason::QualityFail,
                detail: Some(format!("undecodable: {e}")),
            })?;
            if deps.options.quality_gate {
                let report = quality_gate(&image.image_id, &raster, &deps.quality, &deps.plugins);
                if !report.passed {
                    let reason = if report.compliance_only() {
                        RemovalReason::ComplianceFail
                    } else {
                        RemovalReason::QualityFail
                    };
                    let checks: Vec<&str> = report
                        .failures
                        .iter()
                        .map(|f| f.check_name.as_str())
                        .collect();
                    return Err(Removal {
                        image_id: image.image_id.clone(),
                        reason,
                        detail: Some(checks.join(",")),
                    });
                }
            }
            let descriptor = compute_descriptor_with(&raster, descriptor_options);
            let label = entry.classifier.classify(&raster).label;
            Ok(Analyzed {
                image,
                raster,
                descriptor,
                label,
            })
        })
        .collect();
    timings.analyze_ms = elapsed_ms(t);

    let t = Instant::now();
    let mut groups: BTreeMap<String, Vec<TypedImage>> = BTreeMap::new();
    let mut order_of: HashMap<String, usize> = HashMap::new();
    for outcome in analyzed {
        match outcome {
            Err(removal) => {
                match removal.reason {
                    RemovalReason::ComplianceFail => stats.compliance_failed += 1,
                    _ => stats.quality_failed += 1,
                }
                removed.push(removal);
            }
            Ok(a) => {
                order_of.insert(a.image.image_id.clone(), a.image.fetch_order);
                groups.entry(a.label.clone()).or_default().push(TypedImage {
                    image_id: a.image.image_id,
                    descriptor: a.descriptor,
                    type_label: a.label,
                    source: a.image.supplier,
                    source_rank: a.image.fetch_order,
                    pixel_area: a.raster.pixel_area(),
                });
            }
        }
    }
    stats.type_groups = groups.len();
    let clusters = dedupe_groups(&groups, &deps.comparator)
        .expect("groups are keyed by label with unique ids");

    // (fetch_order, image_id, label, cluster_id) of each representative
    let mut representatives: Vec<(usize, String, String, String)> = Vec::new();
    for (label, group_clusters) in &clusters {
        for (k, cluster) in group_clusters.iter().enumerate() {
            stats.clusters += 1;
            let cluster_id = format!("{label}#{k}");
            for member in &cluster.members {
                if *member != cluster.representative {
                    stats.near_duplicates += 1;
                    removed.push(Removal {
                        image_id: member.clone(),
                        reason: RemovalReason::NearDuplicate,
                        detail: Some(format!("duplicate of {}", cluster.representative)),
                    });
                }
            }
            representatives.push((
                order_of[&cluster.representative],
                cluster.representative.clone(),
                label.clone(),
                cluster_id,
            ));
        }
    }
    representatives.sort();
    timings.dedup_ms = elapsed_ms(t);

    let t = Instant::now();
    let candidates = with_occurrence_indices(
        representatives
            .iter()
            .map(|(_, id, label, _)| (id.as_str(), label.as_str())),
    );
    let outcome = if deps.options.reorder {
        order_images(&candidates, &entry.profile)
    } else {
        OrderOutcome {
            ordered: candidates,
            capped: Vec::new(),
        }
    };
    let cluster_of: HashMap<&str, &str> = representatives
        .iter()
        .map(|(_, id, _, cluster)| (id.as_str(), cluster.as_str()))
        .collect();
    for c in &outcome.capped {
        stats.type_capped += 1;
        removed.push(Removal {
            image_id: c.image_id.clone(),
            reason: RemovalReason::TypeCap,
            detail: Some(format!("{} #{}", c.type_label, c.occurrence_index + 1)),
        });
    }
    let ordered: Vec<OrderedImage> = outcome
        .ordered
        .into_iter()
        .enumerate()
        .map(|(i, c)| OrderedImage {
            cluster_id: cluster_of[c.image_id.as_str()].to_string(),
            image_id: c.image_id,
            type_label: c.type_label,
            rank: i + 1,
        })
        .collect();
    stats.selected = ordered.len();
    timings.order_ms = elapsed_ms(t);
    timings.total_ms = elapsed_ms(start);

    (
        SelectionResult {
            item_id: item.item_id.clone(),
            ordered,
            removed,
            stats,
        },
        timings,
    )
}
