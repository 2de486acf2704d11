//! Selection of an optimal, ordered image set for catalog items.
//!
//! The crate is organized by pipeline stage:
//!
//! - [`raster`]: pixel containers, grayscale conversion and resampling
//! - [`descriptor`]: aHash / pHash / dHash / wHash and HSV histograms
//! - [`comparator`]: per-component and ensemble duplicate decisions
//! - [`dedup`]: leader clustering within an image-type group
//! - [`quality`]: heuristic checks, classifier plugins, augmentations
//! - [`typing`]: category routing and image-type classification
//! - [`selection`]: the end-to-end pipeline and image ordering
//! - [`calibration`]: labeled pair benchmarks and threshold sweeps
//! - [`causal`]: synthetic-control effect estimation
//! - [`synth`]: procedural product images for tests and benchmarks

pub mod calibration;
pub mod causal;
pub mod comparator;
pub mod dedup;
pub mod descriptor;
pub mod quality;
pub mod raster;
pub mod selection;
pub mod synth;
pub mod typing;

pub use comparator::{compare, ComparatorConfig, ComparatorReport, Method};
pub use descriptor::{compute_descriptor, BitHash64, ImageDescriptor};
pub use raster::{LumaImage, RasterImage};
pub use selection::{run_pipeline, CatalogItem, PipelineDeps, SelectionResult};
