//! Local item manifests: items, their suppliers and image paths.
//!
//! ```toml
//! [[items]]
//! item_id = "tab-1"
//! category = "tablets"
//!
//! [[items.sources]]
//! supplier = "brand"
//! images = ["brand/front.png", "brand/back.png"]
//! ```
//!
//! Image paths are relative to the manifest's directory and double as the
//! image ids in the output.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use imgsel_core::selection::{CatalogItem, ImageSource, SupplierImages};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub items: Vec<ManifestItem>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestItem {
    pub item_id: String,
    #[serde(default)]
    pub category: Option<String>,
    #[serde(default)]
    pub title: Option<String>,
    #[serde(default)]
    pub curated: bool,
    pub sources: Vec<ManifestSource>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestSource {
    pub supplier: String,
    pub images: Vec<String>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read {}", path.display()))?;
        let manifest: Manifest = toml::from_str(&text)
            .with_context(|| format!("{}: invalid manifest", path.display()))?;
        if manifest.items.is_empty() {
            bail!("{}: manifest lists no items", path.display());
        }
        let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
        Ok((manifest, base))
    }
}

impl ManifestItem {
    /// Reads every image. A missing file fails the whole item.
    pub fn load(&self, base: &Path) -> Result<CatalogItem> {
        let sources = self
            .sources
            .iter()
            .map(|s| {
                let images = s
                    .images
                    .iter()
                    .map(|rel| {
                        let path = base.join(rel);
                        let bytes = std::fs::read(&path)
                            .with_context(|| format!("cannot read {}", path.display()))?;
                        Ok(ImageSource::new(rel.clone(), Arc::<[u8]>::from(bytes)))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(SupplierImages {
                    supplier: s.supplier.clone(),
                    images,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CatalogItem {
            item_id: self.item_id.clone(),
            category_id: self.category.clone(),
            title: self.title.clone(),
            sources,
            curated: self.curated,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paths_resolve_against_manifest_dir() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("imgs")).unwrap();
        std::fs::write(dir.path().join("imgs/a.png"), b"abc").unwrap();
        let path = dir.path().join("m.toml");
        std::fs::write(
            &path,
            "[[items]]\nitem_id = \"x\"\n[[items.sources]]\nsupplier = \"s\"\nimages = [\"imgs/a.png\"]\n",
        )
        .unwrap();
        let (m, base) = Manifest::load(&path).unwrap();
        let item = m.items[0].load(&base).unwrap();
        assert_eq!(item.sources[0].images[0].location, "imgs/a.png");
        assert_eq!(&*item.sources[0].images[0].bytes, b"abc");
        assert!(!item.curated);
    }

    #[test]
    fn missing_image_names_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.toml");
        std::fs::write(
            &path,
            "[[items]]\nitem_id = \"x\"\n[[items.sources]]\nsupplier = \"s\"\nimages = [\"nope.png\"]\n",
        )
        .unwrap();
        let (m, base) = Manifest::load(&path).unwrap();
        let err = m.items[0].load(&base).unwrap_err();
        assert!(format!("{err:#}").contains("nope.png"));
    }

    #[test]
    fn rejects_unknown_fields_and_empty_manifests() {
        assert!(
            toml::from_str::<Manifest>("[[items]]\nitem_id = \"x\"\nsources = []\nsize = 3\n")
                .is_err()
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.toml");
        std::fs::write(&path, "items = []\n").unwrap();
        assert!(Manifest::load(&path).is_err());
    }
}
