//! Whole-cloud upsampling by overlapping patches.

use log::warn;

use super::dataset::nearest_indices;
use crate::error::{Error, Result};
use crate::geometry::{dist2, farthest_point_sample, normalize, Point3, PointCloud};
use crate::model::Model;
use crate::tensor::ParamStore;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PatchConfig {
    pub patch_size: usize,
    /// Seeds per `patch_size` input points.
    pub overlap: usize,
    /// Normalized outputs beyond this radius are counted as outliers.
    pub outlier_radius: f64,
}

impl Default for PatchConfig {
    fn default() -> Self {
        Self {
            patch_size: 256,
            overlap: 3,
            outlier_radius: 1.1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Upsampled {
    pub cloud: PointCloud,
    pub patches: usize,
    pub union_size: usize,
    pub outliers: usize,
}

/// The point index sets of the overlapping inference patches: the
/// `patch_size` nearest points of each of `ceil(N / patch_size) · overlap`
/// FPS seeds. A cloud no larger than one patch is a single patch.
pub fn extract_patches(cloud: &PointCloud, cfg: &PatchConfig) -> Result<Vec<Vec<usize>>> {
    if cfg.patch_size == 0 || cfg.overlap == 0 {
        return Err(Error::Config("patch size and overlap must be positive".into()));
    }
    let n = cloud.len();
    if n <= cfg.patch_size {
        return Ok(vec![(0..n).collect()]);
    }
    let seeds = n.div_ceil(cfg.patch_size) * cfg.overlap;
    let seeds = farthest_point_sample(cloud, seeds.min(n), 0)?;
    Ok(seeds
        .into_iter()
        .map(|s| nearest_indices(cloud, s, cfg.patch_size))
        .collect())
}

/// Upsamples a cloud of any size by `ratio` of the model: every patch is
/// normalized, run through the network and mapped back; the union is then
/// resampled to `r·N` points by FPS starting from the point farthest from
/// the union's centroid.
pub fn upsample_cloud(model: &Model, params: &ParamStore, cloud: &PointCloud, cfg: &PatchConfig) -> Result<Upsampled> {
    let r = model.ratio();
    let target = r * cloud.len();
    let patches = extract_patches(cloud, cfg)?;
    let small = patches.len() == 1 && cloud.len() < model.config.min_points();
    let clamped;
    let model = if small {
        let d = model.config.dilations.0.max(model.config.dilations.1);
        let k = (cloud.len() - 1) / d;
        if k == 0 {
            return Err(Error::Argument(format!(
                "cloud of {} points is too small for dilation {d}",
                cloud.len()
            )));
        }
        warn!("cloud of {} points: neighbor count clamped to {k}", cloud.len());
        clamped = model.with_k(k);
        &clamped
    } else {
        model
    };
    let mut union: Vec<Point3> = Vec::with_capacity(patches.len() * cfg.patch_size * r);
    let mut outliers = 0;
    for idx in &patches {
        let (local, t) = normalize(&cloud.select(idx)?)?;
        let out = model.predict(params, &local)?;
        outliers += out
            .points()
            .iter()
            .filter(|p| dist2(**p, [0.0; 3]) > cfg.outlier_radius * cfg.outlier_radius)
            .count();
        union.extend(out.points().iter().map(|&p| t.invert_point(p)));
    }
    if outliers > 0 {
        warn!("{outliers} upsampled points fell outside radius {} of their patch", cfg.outlier_radius);
    }
    let union = PointCloud::new(union)?;
    let union_size = union.len();
    let c = union.centroid();
    let start = union
        .points()
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &p)| {
            let d = dist2(p, c);
            if d > best.1 {
                (i, d)
            } else {
                best
            }
        })
        .0;
    let keep = farthest_point_sample(&union, target.min(union_size), start)?;
    Ok(Upsampled {
        cloud: union.select(&keep)?,
        patches: patches.len(),
        union_size,
        outliers,
    })
}
