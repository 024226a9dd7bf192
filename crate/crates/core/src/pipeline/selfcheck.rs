//! A quick battery of oracle and gradient checks runnable from the CLI.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::geometry::{knn_with, Bvh, KnnStrategy, Mesh, NeighborIndex, Point3, PointCloud};
use crate::graph::edge_conv;
use crate::metrics::{chamfer, chamfer_distance, hausdorff};
use crate::model::{init_params, ModelConfig};
use crate::tensor::{grad_check, Tape, Tensor, Var};

#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {:<34} {:.3e} (tol {:.0e})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.tolerance
        )
    }
}

fn outcome(name: &'static str, value: Result<f64>, tolerance: f64) -> CheckOutcome {
    match value {
        Ok(v) => CheckOutcome {
            name,
            value: v,
            tolerance,
            passed: v <= tolerance,
        },
        Err(e) => {
            log::error!("{name}: {e}");
            CheckOutcome {
                name,
                value: f64::INFINITY,
                tolerance,
                passed: false,
            }
        }
    }
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("finite")
}

fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> PointCloud {
    PointCloud::new(
        (0..n)
            .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect(),
    )
    .expect("finite")
}

/// EdgeConv spelled out with explicit edge features.
fn edge_conv_reference(tape: &mut Tape, x: Var, nbrs: &NeighborIndex, w: Var, b: Var) -> Result<Var> {
    let (n, c) = tape.value(x).matrix_dims("edge_conv_reference")?;
    let k = nbrs.k();
    let gathered = tape.gather_neighbors(x, nbrs.as_slice(), k)?;
    let centers: Vec<usize> = (0..n).flat_map(|i| std::iter::repeat_n(i, k)).collect();
    let center = tape.gather_neighbors(x, &centers, k)?;
    let diff = tape.sub(gathered, center)?;
    let flat_c = tape.reshape(center, &[n * k, c])?;
    let flat_d = tape.reshape(diff, &[n * k, c])?;
    let edge = tape.concat_channels(&[flat_c, flat_d])?;
    let h = tape.linear(edge, w, b)?;
    let h = tape.relu(h);
    let cout = tape.value(h).cols();
    let h = tape.reshape(h, &[n, k, cout])?;
    tape.max_over_neighbors(h)
}

fn max_abs_diff(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Runs every check; all must pass for a healthy build.
pub fn run_selfcheck(seed: u64) -> Vec<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    let x = random_tensor(&mut rng, &[5, 3]);
    let w = random_tensor(&mut rng, &[3, 2]);
    let b = random_tensor(&mut rng, &[2]);
    let w2 = random_tensor(&mut rng, &[2, 2]);
    out.push(outcome(
        "linear chain gradient",
        grad_check(
            |t, wv| {
                let xv = t.constant(x.clone());
                let bv = t.constant(b.clone());
                let w2v = t.constant(w2.clone());
                let y = t.linear(xv, wv, bv)?;
                let y = t.linear(y, w2v, bv)?;
                Ok(t.sum(y))
            },
            &w,
            1e-5,
        ),
        1e-6,
    ));

    let cloud = random_cloud(&mut rng, 16);
    let nbrs = knn_with(&cloud, 4, false, KnnStrategy::BruteForce).expect("16 points");
    let feats = random_tensor(&mut rng, &[16, 3]);
    let ew = random_tensor(&mut rng, &[6, 5]);
    let eb = random_tensor(&mut rng, &[5]);
    out.push(outcome(
        "edge_conv fused vs explicit",
        (|| {
            let mut t = Tape::new();
            let xv = t.constant(feats.clone());
            let wv = t.constant(ew.clone());
            let bv = t.constant(eb.clone());
            let fused = edge_conv(&mut t, xv, &nbrs, wv, bv)?;
            let naive = edge_conv_reference(&mut t, xv, &nbrs, wv, bv)?;
            Ok(max_abs_diff(t.value(fused), t.value(naive)))
        })(),
        1e-12,
    ));
    out.push(outcome(
        "edge_conv gradient",
        grad_check(
            |t, xv| {
                let wv = t.constant(ew.clone());
                let bv = t.constant(eb.clone());
                let y = edge_conv(t, xv, &nbrs, wv, bv)?;
                Ok(t.sum(y))
            },
            &feats,
            1e-5,
        ),
        1e-4,
    ));

    let gt = random_cloud(&mut rng, 12);
    let pred = random_cloud(&mut rng, 8);
    out.push(outcome(
        "chamfer gradient",
        grad_check(
            |t, pv| chamfer(t, pv, &gt),
            &pred.to_tensor(),
            1e-6,
        ),
        1e-5,
    ));

    let (model, params) = init_params(&ModelConfig::reduced(), seed).expect("reduced config");
    let small = random_cloud(&mut rng, 16);
    let target = random_cloud(&mut rng, 64);
    out.push(outcome(
        "model input gradient",
        (|| {
            let graphs = model.graphs(&small)?;
            grad_check(
                |t, xv| {
                    let p = params.bind(t);
                    let y = model.forward_with(t, &p, xv, &graphs)?;
                    chamfer(t, y, &target)
                },
                &small.to_tensor(),
                1e-6,
            )
        })(),
        1e-4,
    ));

    out.push(outcome(
        "grid knn vs brute force",
        (|| {
            let mut worst = 0.0f64;
            for _ in 0..5 {
                let c = random_cloud(&mut rng, 500);
                let a = knn_with(&c, 16, false, KnnStrategy::Grid)?;
                let b = knn_with(&c, 16, false, KnnStrategy::BruteForce)?;
                if a != b {
                    worst = 1.0;
                }
            }
            Ok(worst)
        })(),
        0.0,
    ));

    out.push(outcome(
        "bvh vs all-faces scan",
        (|| {
            let verts: Vec<Point3> = random_cloud(&mut rng, 30).into_points();
            let faces: Vec<[usize; 3]> = (0..50)
                .map(|_| [rng.random_range(0..30), rng.random_range(0..30), rng.random_range(0..30)])
                .collect();
            let mesh = Mesh::new(verts, faces)?;
            let bvh = Bvh::build(&mesh);
            let mut worst = 0.0f64;
            for p in random_cloud(&mut rng, 100).points() {
                let brute = mesh
                    .triangles()
                    .map(|t| crate::geometry::point_triangle_distance(*p, &t).unwrap_or(f64::INFINITY))
                    .fold(f64::INFINITY, f64::min);
                worst = worst.max((bvh.distance(*p).unwrap_or(f64::NAN) - brute).abs());
            }
            Ok(worst)
        })(),
        1e-12,
    ));

    out.push(outcome(
        "shuffle round trip",
        (|| {
            let mut worst = 0.0f64;
            for (n, c, r) in [(1, 2, 1), (4, 6, 2), (5, 4, 3), (3, 8, 4)] {
                let x = random_tensor(&mut rng, &[n, c * r]);
                let mut t = Tape::new();
                let v = t.constant(x.clone());
                let s = t.periodic_shuffle(v, r)?;
                let back = t.inverse_shuffle(s, r)?;
                worst = worst.max(max_abs_diff(t.value(back), &x));
            }
            Ok(worst)
        })(),
        0.0,
    ));

    out.push(outcome(
        "edge_conv permutation equivariance",
        (|| {
            let n = 16;
            let mut perm: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            let pc = cloud.select(&perm)?;
            let pn = knn_with(&pc, 4, false, KnnStrategy::BruteForce)?;
            let mut pf = Tensor::zeros(&[n, 3]);
            for (i, &src) in perm.iter().enumerate() {
                pf.data_mut()[i * 3..i * 3 + 3].copy_from_slice(feats.row(src));
            }
            let mut t = Tape::new();
            let wv = t.constant(ew.clone());
            let bv = t.constant(eb.clone());
            let xa = t.constant(feats.clone());
            let xb = t.constant(pf);
            let ya = edge_conv(&mut t, xa, &nbrs, wv, bv)?;
            let yb = edge_conv(&mut t, xb, &pn, wv, bv)?;
            let mut worst = 0.0f64;
            for (i, &src) in perm.iter().enumerate() {
                for (a, b) in t.value(yb).row(i).iter().zip(t.value(ya).row(src)) {
                    worst = worst.max((a - b).abs());
                }
            }
            Ok(worst)
        })(),
        0.0,
    ));

    out.push(outcome(
        "chamfer/hausdorff laws",
        (|| {
            let p = random_cloud(&mut rng, 40);
            let q = random_cloud(&mut rng, 30);
            let s = 1.7;
            let sp = p.map(|v| [v[0] * s, v[1] * s, v[2] * s])?;
            let sq = q.map(|v| [v[0] * s, v[1] * s, v[2] * s])?;
            let cd = chamfer_distance(&p, &q);
            let hd = hausdorff(&p, &q);
            Ok((cd - chamfer_distance(&q, &p))
                .abs()
                .max((chamfer_distance(&sp, &sq) - s * s * cd).abs())
                .max((hausdorff(&sp, &sq) - s * hd).abs()))
        })(),
        1e-9,
    ));
    out
}
