//! Point clouds, triangle meshes and the spatial machinery around them.

mod augment;
mod bvh;
pub mod io;
mod knn;
mod normalize;
mod sampling;
mod triangle;

pub use augment::{augment, random_rotation, AugmentConfig};
pub use bvh::Bvh;
pub use knn::{dilated_neighbors, knn, knn_with, nearest_neighbors, KnnStrategy, NeighborIndex};
pub use normalize::{normalize, NormalizeTransform};
pub use sampling::{farthest_point_sample, poisson_sample, poisson_sample_with_faces, sample_surface};
pub use triangle::{closest_point_on_triangle, point_triangle_distance, triangle_is_degenerate};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub type Point3 = [f64; 3];

#[inline]
pub(crate) fn sub(a: Point3, b: Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub(crate) fn add(a: Point3, b: Point3) -> Point3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub(crate) fn scale(a: Point3, s: f64) -> Point3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub(crate) fn dot(a: Point3, b: Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub(crate) fn cross(a: Point3, b: Point3) -> Point3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Squared Euclidean distance. Every nearest-neighbor path uses this exact
/// expression so accelerated and brute-force searches agree bit for bit.
#[inline]
pub fn dist2(a: Point3, b: Point3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// A non-empty set of finite 3D points.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Argument("point cloud must hold at least one point".into()));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("PointCloud::new"));
        }
        Ok(Self { points })
    }

    /// Interprets an `N×3` tensor as a cloud.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let (n, c) = t.matrix_dims("PointCloud::from_tensor")?;
        if c != 3 {
            return Err(crate::error::dim_err(
                "PointCloud::from_tensor",
                format!("expected N×3, got {:?}", t.shape()),
            ));
        }
        Self::new((0..n).map(|i| {
            let r = t.row(i);
            [r[0], r[1], r[2]]
        }).collect())
    }

    pub fn to_tensor(&self) -> Tensor {
        let data = self.points.iter().flatten().copied().collect();
        Tensor::from_parts(vec![self.points.len(), 3], data)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Point3> {
        self.points
    }

    /// Sub-cloud in the order given by `indices`.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        Self::new(indices.iter().map(|&i| self.points[i]).collect())
    }

    pub fn centroid(&self) -> Point3 {
        let mut c = [0.0; 3];
        for p in &self.points {
            c = add(c, *p);
        }
        scale(c, 1.0 / self.points.len() as f64)
    }

    /// Applies `f` to every point.
    pub fn map(&self, f: impl Fn(Point3) -> Point3) -> Result<Self> {
        Self::new(self.points.iter().map(|&p| f(p)).collect())
    }
}

/// Triangle mesh with validated indices and no degenerate faces.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    vertices: Vec<Point3>,
    faces: Vec<[usize; 3]>,
}

impl Mesh {
    /// Validates indices and drops zero-area faces.
    pub fn new(vertices: Vec<Point3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if let Some((fi, f)) = faces
            .iter()
            .enumerate()
            .find(|(_, f)| f.iter().any(|&i| i >= vertices.len()))
        {
            return Err(Error::Argument(format!(
                "face {fi} references vertex {:?} but the mesh has {} vertices",
                f,
                vertices.len()
            )));
        }
        if vertices.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Mesh::new"));
        }
        let before = faces.len();
        let faces: Vec<[usize; 3]> = faces
            .into_iter()
            .filter(|f| !triangle_is_degenerate(&[vertices[f[0]], vertices[f[1]], vertices[f[2]]]))
            .collect();
        if faces.len() < before {
            log::debug!("dropped {} degenerate faces", before - faces.len());
        }
        Ok(Self { vertices, faces })
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn triangle(&self, face: usize) -> [Point3; 3] {
        let f = self.faces[face];
        [self.vertices[f[0]], self.vertices[f[1]], self.vertices[f[2]]]
    }

    pub fn triangles(&self) -> impl Iterator<Item = [Point3; 3]> + '_ {
        (0..self.faces.len()).map(|i| self.triangle(i))
    }

    pub fn surface_area(&self) -> f64 {
        self.triangles().map(|t| triangle_area(&t)).sum()
    }
}

pub(crate) fn triangle_area(t: &[Point3; 3]) -> f64 {
    let c = cross(sub(t[1], t[0]), sub(t[2], t[0]));
    0.5 * dot(c, c).sqrt()
}
