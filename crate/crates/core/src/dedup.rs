//! Leader clustering of same-type images into near-duplicate clusters.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comparator::{is_duplicate, ComparatorConfig};
use crate::descriptor::ImageDescriptor;

#[derive(Debug, Error, PartialEq)]
pub enum DedupError {
    #[error("cluster_group needs one type label, found {0:?} and {1:?}")]
    MixedTypeLabels(String, String),
    #[error("duplicate image id {0:?} in group")]
    DuplicateId(String),
}

#[derive(Debug, Clone)]
pub struct TypedImage {
    pub image_id: String,
    pub descriptor: ImageDescriptor,
    pub type_label: String,
    pub source: String,
    pub source_rank: usize,
    pub pixel_area: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    /// Scan order; the first member is the leader.
    pub members: Vec<String>,
    pub representative: String,
}

impl Cluster {
    pub fn leader(&self) -> &str {
        &self.members[0]
    }
}

fn scan_order(images: &[TypedImage]) -> Vec<&TypedImage> {
    let mut ordered: Vec<&TypedImage> = images.iter().collect();
    ordered.sort_by(|a, b| (a.source_rank, &a.image_id).cmp(&(b.source_rank, &b.image_id)));
    ordered
}

/// Scans images by `(source_rank, image_id)` and puts each into the first
/// cluster whose leader it duplicates, founding a new cluster otherwise.
pub fn cluster_group(
    images: &[TypedImage],
    cfg: &ComparatorConfig,
) -> Result<Vec<Cluster>, DedupError> {
    if let Some(first) = images.first() {
        if let Some(other) = images.iter().find(|i| i.type_label != first.type_label) {
            return Err(DedupError::MixedTypeLabels(
                first.type_label.clone(),
                other.type_label.clone(),
            ));
        }
    }
    let mut by_id: HashMap<&str, &TypedImage> = HashMap::with_capacity(images.len());
    for img in images {
        if by_id.insert(&img.image_id, img).is_some() {
            return Err(DedupError::DuplicateId(img.image_id.clone()));
        }
    }

    let mut groups: Vec<Vec<&TypedImage>> = Vec::new();
    for img in scan_order(images) {
        match groups
            .iter_mut()
            .find(|members| is_duplicate(&members[0].descriptor, &img.descriptor, cfg))
        {
            Some(members) => members.push(img),
            None => groups.push(vec![img]),
        }
    }

    Ok(groups
        .into_iter()
        .map(|members| {
            let mut cluster = Cluster {
                members: members.iter().map(|m| m.image_id.clone()).collect(),
                representative: String::new(),
            };
            cluster.representative = select_representative(&cluster, &by_id);
            cluster
        })
        .collect())
}

/// Largest pixel area wins; ties go to the lower source rank, then the
/// lexicographically smaller id.
pub fn select_representative(cluster: &Cluster, images: &HashMap<&str, &TypedImage>) -> String {
    cluster
        .members
        .iter()
        .map(|id| images[id.as_str()])
        .min_by(|a, b| {
            b.pixel_area
                .cmp(&a.pixel_area)
                .then(a.source_rank.cmp(&b.source_rank))
                .then(a.image_id.cmp(&b.image_id))
        })
        .map(|img| img.image_id.clone())
        .expect("clusters are non-empty")
}

/// Clusters every type group independently; groups run in parallel.
pub fn dedupe_groups(
    groups: &BTreeMap<String, Vec<TypedImage>>,
    cfg: &ComparatorConfig,
) -> Result<BTreeMap<String, Vec<Cluster>>, DedupError> {
    groups
        .par_iter()
        .map(|(label, images)| cluster_group(images, cfg).map(|c| (label.clone(), c)))
        .collect::<Result<Vec<_>, _>>()
        .map(|pairs| pairs.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::{compute_descriptor, BitHash64};
    use crate::raster::RasterImage;

    fn base_descriptor() -> ImageDescriptor {
        compute_descriptor(&RasterImage::filled(10, 10, [200, 10, 10]).unwrap())
    }

    fn typed(id: &str, phash: u64, rank: usize, area: u64) -> TypedImage {
        let mut descriptor = base_descriptor();
        descriptor.phash = BitHash64(phash);
        TypedImage {
            image_id: id.into(),
            descriptor,
            type_label: "front".into(),
            source: "supplier".into(),
            source_rank: rank,
            pixel_area: area,
        }
    }

    #[test]
    fn singleton_and_empty() {
        let cfg = ComparatorConfig::default();
        assert!(cluster_group(&[], &cfg).unwrap().is_empty());
        let c = cluster_group(&[typed("a", 0, 0, 1)], &cfg).unwrap();
        assert_eq!(
            c,
            vec![Cluster {
                members: vec!["a".into()],
                representative: "a".into()
            }]
        );
    }

    #[test]
    fn leader_rule() {
        // A~B (5 bits), A!~C (40 bits), B!~C (35 bits)
        let cfg = ComparatorConfig::default();
        let a = typed("A", 0, 0, 10);
        let b = typed("B", 0b11111, 1, 10);
        let c = typed("C", (1u64 << 40) - 1, 2, 10);
        let clusters = cluster_group(&[c, a, b], &cfg).unwrap();
        let members: Vec<_> = clusters.iter().map(|c| c.members.clone()).collect();
        assert_eq!(
            members,
            vec![vec!["A".to_string(), "B".into()], vec!["C".into()]]
        );
    }

    #[test]
    fn representative_rules() {
        let cfg = ComparatorConfig::default();
        let clusters = cluster_group(
            &[
                typed("small", 0, 0, 500 * 500),
                typed("big", 0, 1, 1000 * 1000),
            ],
            &cfg,
        )
        .unwrap();
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].representative, "big");

        let clusters =
            cluster_group(&[typed("x", 0, 2, 100), typed("y", 0, 0, 100)], &cfg).unwrap();
        assert_eq!(clusters[0].representative, "y");
        assert_eq!(clusters[0].leader(), "y");
    }

    #[test]
    fn mixed_labels_rejected() {
        let mut b = typed("b", 0, 1, 1);
        b.type_label = "back".into();
        assert!(matches!(
            cluster_group(&[typed("a", 0, 0, 1), b], &ComparatorConfig::default()),
            Err(DedupError::MixedTypeLabels(..))
        ));
    }

    #[test]
    fn groups_keep_keys() {
        let cfg = ComparatorConfig::default();
        let mut groups = BTreeMap::new();
        groups.insert(
            "front".to_string(),
            vec![
                typed("a", 0, 0, 1),
                typed("b", 1, 1, 2),
                typed("c", 3, 2, 3),
            ],
        );
        let mut back = typed("d", u64::MAX, 0, 1);
        back.type_label = "back".into();
        groups.insert("back".to_string(), vec![back]);
        let out = dedupe_groups(&groups, &cfg).unwrap();
        assert_eq!(out.keys().collect::<Vec<_>>(), vec!["back", "front"]);
        assert_eq!(out["front"].len(), 1);
        assert_eq!(out["front"][0].representative, "c");
        assert_eq!(out["back"][0].members, vec!["d".to_string()]);
    }
}
