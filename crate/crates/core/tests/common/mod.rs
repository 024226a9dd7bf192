//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use pugcn::geometry::{Point3, PointCloud};
use pugcn::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Point3> {
    (0..n)
        .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
        .collect()
}

pub fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> PointCloud {
    PointCloud::new(random_points(rng, n)).unwrap()
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

pub fn d2(a: Point3, b: Point3) -> f64 {
    (0..3).map(|c| (a[c] - b[c]) * (a[c] - b[c])).sum()
}

/// Sorts every other point by (distance, index) and keeps the first `k`.
pub fn knn_reference(points: &[Point3], k: usize, include_self: bool) -> Vec<Vec<usize>> {
    (0..points.len())
        .map(|i| {
            let mut order: Vec<usize> = (0..points.len()).filter(|&j| include_self || j != i).collect();
            order.sort_by(|&a, &b| {
                d2(points[i], points[a])
                    .total_cmp(&d2(points[i], points[b]))
                    .then(a.cmp(&b))
            });
            order.truncate(k);
            order
        })
        .collect()
}

/// EdgeConv with explicit edge features `[x_i, x_j − x_i]`, one edge at a
/// time: `max_j relu([x_i, x_j − x_i]·W + b)`.
pub fn edge_conv_reference(x: &Tensor, nbrs: &[Vec<usize>], w: &Tensor, b: &Tensor) -> Tensor {
    let (n, cin) = (x.rows(), x.cols());
    let cout = w.cols();
    let mut out = vec![f64::NEG_INFINITY; n * cout];
    for i in 0..n {
        for &j in &nbrs[i] {
            let mut edge = x.row(i).to_vec();
            edge.extend((0..cin).map(|c| x.row(j)[c] - x.row(i)[c]));
            for o in 0..cout {
                let mut h = b.data()[o];
                for (r, e) in edge.iter().enumerate() {
                    h += e * w.row(r)[o];
                }
                let h = h.max(0.0);
                if h > out[i * cout + o] {
                    out[i * cout + o] = h;
                }
            }
        }
    }
    Tensor::new(&[n, cout], out).unwrap()
}

/// Distance from `p` to the triangle by dense barycentric sampling plus the
/// three vertices; an upper bound that tightens with `samples`.
pub fn triangle_distance_sampled(p: Point3, t: &[Point3; 3], rng: &mut ChaCha8Rng, samples: usize) -> f64 {
    let mut best = t.iter().map(|&v| d2(p, v)).fold(f64::INFINITY, f64::min);
    for _ in 0..samples {
        let (mut u, mut v): (f64, f64) = (rng.random(), rng.random());
        if u + v > 1.0 {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        let q = [0, 1, 2].map(|c| t[0][c] + u * (t[1][c] - t[0][c]) + v * (t[2][c] - t[0][c]));
        best = best.min(d2(p, q));
    }
    best.sqrt()
}

/// Greedy max-min selection, recomputing all distances every round.
pub fn fps_reference(points: &[Point3], m: usize, start: usize) -> Vec<usize> {
    let mut chosen = vec![start];
    while chosen.len() < m {
        let mut best = (f64::NEG_INFINITY, 0);
        for i in 0..points.len() {
            let d = chosen.iter().map(|&c| d2(points[i], points[c])).fold(f64::INFINITY, f64::min);
            if d > best.0 {
                best = (d, i);
            }
        }
        chosen.push(best.1);
    }
    chosen
}

pub fn max_abs_diff(a: &Tensor, b: &Tensor) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
