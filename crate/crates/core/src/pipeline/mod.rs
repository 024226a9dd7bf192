//! Dataset generation, patch-based inference, settings files and the
//! built-in self check.

mod config;
mod dataset;
mod infer;
mod selfcheck;
pub mod shapes;

pub use config::Settings;
pub use dataset::{
    cut_patches, generate_dataset, load_patch_pairs, load_test_pairs, nearest_indices, DatasetConfig,
    DatasetManifest, MeshEntry, PatchEntry, TestEntry, TestPair, GENERATOR_VERSION, MANIFEST_FILE,
};
pub use infer::{extract_patches, upsample_cloud, PatchConfig, Upsampled};
pub use selfcheck::{run_selfcheck, CheckOutcome};

use crate::geometry::{NormalizeTransform, PointCloud};

/// A normalized training pair: `gt` is a surface patch and `input` a sparse
/// subset of it.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchPair {
    pub input: PointCloud,
    pub gt: PointCloud,
    /// Maps the source mesh's coordinates into this pair's frame.
    pub transform: NormalizeTransform,
    /// Mesh name or patch file the pair came from.
    pub source: String,
    /// Index of the patch centre in the dense cloud it was cut from.
    pub seed_point: usize,
}
