use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{Point3, PointCloud};
use crate::error::Result;

/// Training-time augmentation toggles.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentConfig {
    pub rotate: bool,
    /// Inclusive range of the shared uniform scale, or `None` for no scaling.
    pub scale: Option<(f64, f64)>,
    /// `(sigma, clip)` of the Gaussian jitter added to the input only.
    pub jitter: Option<(f64, f64)>,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            rotate: true,
            scale: Some((0.8, 1.2)),
            jitter: Some((0.005, 0.015)),
        }
    }
}

impl AugmentConfig {
    pub const OFF: Self = Self {
        rotate: false,
        scale: None,
        jitter: None,
    };
}

/// Uniformly distributed rotation matrix (uniform unit quaternion).
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> [[f64; 3]; 3] {
    use std::f64::consts::TAU;
    let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
    let a = (1.0 - u1).sqrt();
    let b = u1.sqrt();
    let (x, y, z, w) = (a * (TAU * u2).sin(), a * (TAU * u2).cos(), b * (TAU * u3).sin(), b * (TAU * u3).cos());
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - z * w), 2.0 * (x * z + y * w)],
        [2.0 * (x * y + z * w), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - x * w)],
        [2.0 * (x * z - y * w), 2.0 * (y * z + x * w), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

pub(crate) fn rotate(m: &[[f64; 3]; 3], p: Point3) -> Point3 {
    [
        m[0][0] * p[0] + m[0][1] * p[1] + m[0][2] * p[2],
        m[1][0] * p[0] + m[1][1] * p[1] + m[1][2] * p[2],
        m[2][0] * p[0] + m[2][1] * p[1] + m[2][2] * p[2],
    ]
}

/// Applies one shared rotation and scale to both clouds, then jitters the
/// input alone.
pub fn augment<R: Rng + ?Sized>(
    input: &PointCloud,
    gt: &PointCloud,
    rng: &mut R,
    cfg: &AugmentConfig,
) -> Result<(PointCloud, PointCloud)> {
    let rot = cfg.rotate.then(|| random_rotation(rng));
    let s = cfg.scale.map_or(1.0, |(lo, hi)| rng.random_range(lo..=hi));
    let shared = |p: Point3| {
        let p = rot.as_ref().map_or(p, |m| rotate(m, p));
        [p[0] * s, p[1] * s, p[2] * s]
    };
    let mut inp = input.map(shared)?;
    let gt = gt.map(shared)?;
    if let Some((sigma, clip)) = cfg.jitter {
        let normal = Normal::new(0.0, sigma).expect("jitter sigma must be finite and non-negative");
        let jittered = inp
            .points()
            .iter()
            .map(|p| {
                let mut q = *p;
                for v in &mut q {
                    *v += normal.sample(rng).clamp(-clip, clip);
                }
                q
            })
            .collect();
        inp = PointCloud::new(jittered)?;
    }
    Ok((inp, gt))
}
