//! Point cloud upsampling with graph convolutions.
//!
//! The crate bundles everything needed to train and run a PU-GCN style
//! upsampler without external ML frameworks:
//!
//! - [`tensor`]: dense tensors with a tape-based reverse-mode engine
//! - [`geometry`]: clouds, meshes, neighbor search, sampling, distances
//! - [`graph`]: EdgeConv, DenseGCN and Inception DenseGCN layers
//! - [`upsample`]: NodeShuffle plus the MLPShuffle / Duplicate variants
//! - [`model`]: the assembled network and its checkpoint format
//! - [`metrics`]: Chamfer loss, Hausdorff, point-to-surface and reports
//! - [`train`]: Adam and the patch training loop
//! - [`pipeline`]: dataset generation, patch inference and self checks

pub mod error;
pub mod geometry;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod tensor;
pub mod train;
pub mod upsample;

pub use error::{Error, Result};
