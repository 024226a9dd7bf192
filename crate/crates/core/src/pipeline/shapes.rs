//! Analytic meshes standing in for a real model collection.

use std::f64::consts::{PI, TAU};

use crate::error::Result;
use crate::geometry::{Mesh, Point3};

/// Triangulated `(u, v)` grid. `wrap_u` joins the last column to the first.
fn parametric(nu: usize, nv: usize, wrap_u: bool, wrap_v: bool, f: impl Fn(f64, f64) -> Point3) -> Result<Mesh> {
    let cols = if wrap_u { nu } else { nu + 1 };
    let rows = if wrap_v { nv } else { nv + 1 };
    let mut vertices = Vec::with_capacity(cols * rows);
    for j in 0..rows {
        for i in 0..cols {
            vertices.push(f(i as f64 / nu as f64, j as f64 / nv as f64));
        }
    }
    let at = |i: usize, j: usize| (j % rows) * cols + (i % cols);
    let mut faces = Vec::with_capacity(nu * nv * 2);
    for j in 0..nv {
        for i in 0..nu {
            let (a, b, c, d) = (at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    Mesh::new(vertices, faces)
}

fn signed_pow(x: f64, e: f64) -> f64 {
    x.signum() * x.abs().powf(e)
}

/// Superellipsoid with semi-axes `radii` and shape exponents `(e1, e2)`;
/// `(1, 1)` is an ellipsoid.
pub fn superellipsoid(radii: [f64; 3], e1: f64, e2: f64, resolution: usize) -> Result<Mesh> {
    parametric(2 * resolution, resolution, true, false, |u, v| {
        let lon = u * TAU - PI;
        let lat = v * PI - PI / 2.0;
        let (cl, sl) = (lat.cos(), lat.sin());
        [
            radii[0] * signed_pow(cl, e1) * signed_pow(lon.cos(), e2),
            radii[1] * signed_pow(cl, e1) * signed_pow(lon.sin(), e2),
            radii[2] * signed_pow(sl, e1),
        ]
    })
}

pub fn sphere(radius: f64, resolution: usize) -> Result<Mesh> {
    superellipsoid([radius; 3], 1.0, 1.0, resolution)
}

pub fn torus(major: f64, minor: f64, resolution: usize) -> Result<Mesh> {
    parametric(2 * resolution, resolution, true, true, |u, v| {
        let (a, b) = (u * TAU, v * TAU);
        let ring = major + minor * b.cos();
        [ring * a.cos(), ring * a.sin(), minor * b.sin()]
    })
}

/// A 3×3×3 block of unit voxels with the centre and the six face-centre
/// voxels removed, giving three orthogonal square tunnels.
pub fn cube_with_holes(size: f64) -> Result<Mesh> {
    let filled = |x: i64, y: i64, z: i64| -> bool {
        if !(0..3).contains(&x) || !(0..3).contains(&y) || !(0..3).contains(&z) {
            return false;
        }
        [x, y, z].iter().filter(|&&c| c == 1).count() < 2
    };
    let s = size / 3.0;
    let mut vertices: Vec<Point3> = Vec::new();
    let mut faces = Vec::new();
    let corner = |p: [i64; 3]| [p[0] as f64 * s - size / 2.0, p[1] as f64 * s - size / 2.0, p[2] as f64 * s - size / 2.0];
    for x in 0..3 {
        for y in 0..3 {
            for z in 0..3 {
                if !filled(x, y, z) {
                    continue;
                }
                for axis in 0..3 {
                    for dir in [-1i64, 1] {
                        let mut n = [x, y, z];
                        n[axis] += dir;
                        if filled(n[0], n[1], n[2]) {
                            continue;
                        }
                        let (u, w) = ((axis + 1) % 3, (axis + 2) % 3);
                        let mut base = [x, y, z];
                        if dir > 0 {
                            base[axis] += 1;
                        }
                        let mut quad = [base; 4];
                        quad[1][u] += 1;
                        quad[2][u] += 1;
                        quad[2][w] += 1;
                        quad[3][w] += 1;
                        let i0 = vertices.len();
                        vertices.extend(quad.iter().map(|&q| corner(q)));
                        if dir > 0 {
                            faces.push([i0, i0 + 1, i0 + 2]);
                            faces.push([i0, i0 + 2, i0 + 3]);
                        } else {
                            faces.push([i0, i0 + 2, i0 + 1]);
                            faces.push([i0, i0 + 3, i0 + 2]);
                        }
                    }
                }
            }
        }
    }
    Mesh::new(vertices, faces)
}

/// `count` named meshes cycling through spheres, tori, superellipsoids and
/// the holed cube with varying proportions.
pub fn synthetic_pack(count: usize) -> Result<Vec<(String, Mesh)>> {
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let variant = (i / 5) as f64;
        let (name, mesh) = match i % 5 {
            0 => ("sphere", sphere(1.0, 24)?),
            1 => ("torus", torus(1.0, 0.3 + 0.1 * variant, 24)?),
            2 => ("box", superellipsoid([1.0, 0.8 - 0.1 * variant, 0.6], 0.3, 0.3, 24)?),
            3 => ("holes", cube_with_holes(2.0 - 0.2 * variant)?),
            _ => ("pillow", superellipsoid([1.0, 1.0, 0.5 + 0.2 * variant], 1.8, 0.7, 24)?),
        };
        out.push((format!("{i:02}_{name}"), mesh));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_area_close_to_analytic() {
        let m = sphere(1.0, 48).unwrap();
        let a = m.surface_area();
        assert!((a - 4.0 * PI).abs() / (4.0 * PI) < 0.01, "{a}");
    }

    #[test]
    fn torus_area_close_to_analytic() {
        let m = torus(1.0, 0.25, 48).unwrap();
        let exact = 4.0 * PI * PI * 1.0 * 0.25;
        assert!((m.surface_area() - exact).abs() / exact < 0.01);
    }

    #[test]
    fn holed_cube_area() {
        // Outer faces keep 8 unit squares each (48); each of the six tunnel
        // arms has 4 unit walls (24).
        let m = cube_with_holes(3.0).unwrap();
        assert!((m.surface_area() - 72.0).abs() < 1e-9, "{}", m.surface_area());
    }

    #[test]
    fn pack_has_distinct_names() {
        let pack = synthetic_pack(10).unwrap();
        assert_eq!(pack.len(), 10);
        let mut names: Vec<_> = pack.iter().map(|p| p.0.clone()).collect();
        names.dedup();
        assert_eq!(names.len(), 10);
        assert!(pack.iter().all(|(_, m)| !m.is_empty()));
    }
}
