use serde::{Deserialize, Serialize};

use super::{scale, sub, add, Point3, PointCloud};
use crate::error::Result;

/// Centering plus isotropic scaling into the unit sphere.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizeTransform {
    pub centroid: Point3,
    pub scale: f64,
}

impl NormalizeTransform {
    pub const IDENTITY: Self = Self {
        centroid: [0.0; 3],
        scale: 1.0,
    };

    /// Transform that maps `cloud` into the unit sphere around the origin.
    /// A cloud of identical points gets scale 1.
    pub fn fit(cloud: &PointCloud) -> Self {
        let centroid = cloud.centroid();
        let max_norm = cloud
            .points()
            .iter()
            .map(|&p| super::dot(sub(p, centroid), sub(p, centroid)))
            .fold(0.0, f64::max)
            .sqrt();
        let scale = if max_norm > 0.0 { max_norm } else { 1.0 };
        Self { centroid, scale }
    }

    pub fn apply_point(&self, p: Point3) -> Point3 {
        scale(sub(p, self.centroid), 1.0 / self.scale)
    }

    pub fn invert_point(&self, p: Point3) -> Point3 {
        add(scale(p, self.scale), self.centroid)
    }

    pub fn apply(&self, cloud: &PointCloud) -> Result<PointCloud> {
        cloud.map(|p| self.apply_point(p))
    }

    /// Maps a normalized cloud back to source units.
    pub fn invert(&self, cloud: &PointCloud) -> Result<PointCloud> {
        cloud.map(|p| self.invert_point(p))
    }
}

/// Unit-sphere normalization; returns the cloud and the transform to undo it.
pub fn normalize(cloud: &PointCloud) -> Result<(PointCloud, NormalizeTransform)> {
    let t = NormalizeTransform::fit(cloud);
    Ok((t.apply(cloud)?, t))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_example() {
        let c = PointCloud::new(vec![[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]]).unwrap();
        let (n, t) = normalize(&c).unwrap();
        assert_eq!(t.centroid, [1.0, 0.0, 0.0]);
        assert_eq!(t.scale, 1.0);
        assert_eq!(n.points(), &[[-1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
    }

    #[test]
    fn degenerate_cloud_keeps_unit_scale() {
        let c = PointCloud::new(vec![[3.0, 3.0, 3.0]; 4]).unwrap();
        let (n, t) = normalize(&c).unwrap();
        assert_eq!(t.scale, 1.0);
        assert!(n.points().iter().all(|p| *p == [0.0; 3]));
    }

    #[test]
    fn round_trip_and_unit_sphere() {
        let c = PointCloud::new(vec![
            [10.0, -2.0, 3.5],
            [11.5, -1.0, 2.0],
            [9.0, 0.25, 4.0],
            [10.2, -3.0, 3.0],
        ])
        .unwrap();
        let (n, t) = normalize(&c).unwrap();
        let back = t.invert(&n).unwrap();
        for (a, b) in back.points().iter().zip(c.points()) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 1e-12);
            }
        }
        let cen = n.centroid();
        assert!(cen.iter().all(|v| v.abs() < 1e-12));
        let max = n
            .points()
            .iter()
            .map(|p| super::super::dot(*p, *p).sqrt())
            .fold(0.0, f64::max);
        assert!((max - 1.0).abs() < 1e-12);

        // Already centered unit-sphere input is left (nearly) alone.
        let (_, t2) = normalize(&n).unwrap();
        assert!(t2.centroid.iter().all(|v| v.abs() < 1e-12));
        assert!((t2.scale - 1.0).abs() < 1e-12);
    }
}
