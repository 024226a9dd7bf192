//! Farthest-point sampling and surface sampling of meshes.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::knn::Grid;
use super::{add, dist2, scale, sub, triangle_area, Mesh, Point3, PointCloud};
use crate::error::{Error, Result};

/// Oversampling factor of the candidate set before elimination.
pub const CANDIDATE_FACTOR: usize = 10;

/// Greedy max-min subset of `m` indices starting at `start`. Ties go to the
/// lowest index.
pub fn farthest_point_sample(cloud: &PointCloud, m: usize, start: usize) -> Result<Vec<usize>> {
    let pts = cloud.points();
    if m > pts.len() {
        return Err(Error::Argument(format!(
            "cannot pick {m} farthest points from {}",
            pts.len()
        )));
    }
    if start >= pts.len() {
        return Err(Error::Argument(format!(
            "start index {start} outside cloud of {}",
            pts.len()
        )));
    }
    let mut picked = Vec::with_capacity(m);
    if m == 0 {
        return Ok(picked);
    }
    let mut min_d = vec![f64::INFINITY; pts.len()];
    let mut current = start;
    for _ in 0..m {
        picked.push(current);
        min_d[current] = f64::NEG_INFINITY;
        let c = pts[current];
        let mut next = 0;
        let mut best = f64::NEG_INFINITY;
        for (i, (d, p)) in min_d.iter_mut().zip(pts).enumerate() {
            if *d == f64::NEG_INFINITY {
                continue;
            }
            let nd = dist2(c, *p);
            if nd < *d {
                *d = nd;
            }
            if *d > best {
                best = *d;
                next = i;
            }
        }
        current = next;
    }
    Ok(picked)
}

/// Area-weighted uniform samples on the mesh surface with their face ids.
pub fn sample_surface<R: Rng + ?Sized>(mesh: &Mesh, n: usize, rng: &mut R) -> Result<(Vec<Point3>, Vec<usize>)> {
    if mesh.is_empty() {
        return Err(Error::Argument("cannot sample an empty mesh".into()));
    }
    let mut cdf = Vec::with_capacity(mesh.faces().len());
    let mut total = 0.0;
    for t in mesh.triangles() {
        total += triangle_area(&t);
        cdf.push(total);
    }
    let mut pts = Vec::with_capacity(n);
    let mut faces = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.random::<f64>() * total;
        let f = cdf.partition_point(|&c| c < u).min(cdf.len() - 1);
        let t = mesh.triangle(f);
        let r1: f64 = rng.random::<f64>().sqrt();
        let r2: f64 = rng.random();
        let p = add(
            t[0],
            add(
                scale(sub(t[1], t[0]), r1 * (1.0 - r2)),
                scale(sub(t[2], t[0]), r1 * r2),
            ),
        );
        pts.push(p);
        faces.push(f);
    }
    Ok((pts, faces))
}

#[derive(PartialEq)]
struct Entry {
    d2: f64,
    idx: usize,
    stamp: u32,
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2.total_cmp(&other.d2).then(self.idx.cmp(&other.idx))
    }
}

/// Like [`poisson_sample`], also returning the face each point lies on.
pub fn poisson_sample_with_faces(mesh: &Mesh, n: usize, seed: u64) -> Result<(PointCloud, Vec<usize>)> {
    if n == 0 {
        return Err(Error::Argument("sample count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (cand, faces) = sample_surface(mesh, n * CANDIDATE_FACTOR, &mut rng)?;
    let keep = eliminate(&cand, n);
    let pts = keep.iter().map(|&i| cand[i]).collect();
    let faces = keep.iter().map(|&i| faces[i]).collect();
    Ok((PointCloud::new(pts)?, faces))
}

/// Approximate Poisson-disk sampling: oversample the surface, then
/// repeatedly drop the point closest to its nearest surviving neighbor until
/// `n` remain. Deterministic in `seed`.
pub fn poisson_sample(mesh: &Mesh, n: usize, seed: u64) -> Result<PointCloud> {
    poisson_sample_with_faces(mesh, n, seed).map(|(c, _)| c)
}

/// Greedy sample elimination down to `n` survivors; returns them in
/// ascending candidate order.
fn eliminate(cand: &[Point3], n: usize) -> Vec<usize> {
    let total = cand.len();
    if total <= n {
        return (0..total).collect();
    }
    if n == 1 {
        return vec![0];
    }
    // Cells sized for the final density once elimination is well underway.
    let grid = Grid::build(cand, 2.0 * (total as f64 / n as f64).sqrt());
    let mut alive = vec![true; total];
    let mut nn = vec![usize::MAX; total];
    let mut stamp = vec![0u32; total];
    let mut referrers: Vec<Vec<usize>> = vec![Vec::new(); total];
    let mut heap = BinaryHeap::with_capacity(total * 2);

    for i in 0..total {
        let (j, d2) = grid
            .nearest_alive(cand[i], i, &alive)
            .expect("at least two candidates");
        nn[i] = j;
        referrers[j].push(i);
        heap.push(Reverse(Entry { d2, idx: i, stamp: 0 }));
    }

    let mut remaining = total;
    while remaining > n {
        let Reverse(e) = heap.pop().expect("heap holds every live point");
        if !alive[e.idx] || stamp[e.idx] != e.stamp {
            continue;
        }
        alive[e.idx] = false;
        remaining -= 1;
        for q in std::mem::take(&mut referrers[e.idx]) {
            if !alive[q] || nn[q] != e.idx {
                continue;
            }
            let (j, d2) = grid
                .nearest_alive(cand[q], q, &alive)
                .expect("more than one survivor");
            nn[q] = j;
            stamp[q] += 1;
            referrers[j].push(q);
            heap.push(Reverse(Entry {
                d2,
                idx: q,
                stamp: stamp[q],
            }));
        }
    }
    (0..total).filter(|&i| alive[i]).collect()
}
