//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run everything with `cargo test --test acceptance`, or pick criteria by
//! number: `cargo test --test acceptance -- 2 5`.

use std::process::ExitCode;
use std::time::Instant;

use pugcn::geometry::io::write_off;
use pugcn::geometry::{
    dilated_neighbors, knn_with, point_triangle_distance, poisson_sample, AugmentConfig, Bvh, KnnStrategy, Mesh,
    Point3, PointCloud,
};
use pugcn::graph::{DenseGcn, EdgeConv, Inception, Initializer, Linear};
use pugcn::metrics::{chamfer, chamfer_distance, hausdorff, p2f, p2f_with};
use pugcn::model::{init_params, param_count, Model, ModelConfig};
use pugcn::pipeline::{
    cut_patches, generate_dataset, load_patch_pairs, load_test_pairs, run_selfcheck, shapes, upsample_cloud,
    DatasetConfig, PatchConfig, PatchPair,
};
use pugcn::tensor::{grad_check_report, BoundParams, GradCheckOptions, GradReport, ParamStore, Tape, Tensor, Var};
use pugcn::train::{TrainConfig, Trainer};
use pugcn::upsample::{Upsampler, UpsamplerKind};
use pugcn::Result;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GRAD_TOL: f64 = 1e-4;
const GRAD_EPS: f64 = 1e-5;
/// Relative-error denominator floor; central-difference roundoff at this
/// step is about 1e-11 absolute for O(1) losses.
const GRAD_FLOOR: f64 = 1e-6;
/// Share of coordinates allowed to be skipped for straddling a kink.
const GRAD_MAX_SKIPPED: f64 = 0.01;
const GRAD_BIAS_SPREAD: f64 = 0.1;
const GRAD_POINTS: usize = 16;
const REDUCED_K: usize = 4;
const REDUCED_C: usize = 8;
const KNN_CLOUDS: usize = 50;
const KNN_POINTS: usize = 500;
const BVH_MESHES: usize = 20;
const BVH_TOL: f64 = 1e-12;
const TIE_TOL: f64 = 1e-12;
const EQUIV_PERMS: usize = 20;
const EQUIV_POINTS: usize = 64;
const METRIC_TOL: f64 = 1e-9;
const OVERFIT_STEPS: usize = 2000;
const OVERFIT_FRACTION: f64 = 0.10;
const ABLATION_MESHES: usize = 10;
const ABLATION_EPOCHS: usize = 20;
const ABLATION_SEEDS: [u64; 3] = [0, 1, 2];
const ABLATION_BATCH: usize = 4;
const ABLATION_PATCHES: usize = 50;
const BUDGET: (usize, usize) = (40_000, 160_000);
const P2F_ON_MESH_TOL: f64 = 1e-9;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        passed,
        detail: detail.into(),
    }
}

fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> PointCloud {
    PointCloud::new(
        (0..n)
            .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect(),
    )
    .unwrap()
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn permutation(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

fn permute_rows(t: &Tensor, perm: &[usize]) -> Tensor {
    let c = t.cols();
    let data = perm.iter().flat_map(|&src| t.row(src).to_vec()).collect();
    Tensor::new(&[perm.len(), c], data).unwrap()
}

/// Scalar `Σ y·R` for a fixed random `R`, so no gradient entry vanishes by
/// symmetry.
fn project(t: &mut Tape, y: Var, r: &Tensor) -> Result<Var> {
    let rv = t.constant(r.clone());
    let zero = t.constant(Tensor::zeros(&[1]));
    let s = t.linear(y, rv, zero)?;
    Ok(t.sum(s))
}

const GRAD_OPTS: GradCheckOptions = GradCheckOptions {
    eps: GRAD_EPS,
    floor: GRAD_FLOOR,
    skip_kinks: true,
};

fn merge(a: GradReport, b: GradReport) -> GradReport {
    GradReport {
        worst: a.worst.max(b.worst),
        worst_index: if b.worst > a.worst { b.worst_index } else { a.worst_index },
        checked: a.checked + b.checked,
        skipped: a.skipped + b.skipped,
    }
}

/// Zero-initialized biases put dead rows exactly on relu kinks; checks run
/// at a generic point instead.
fn randomize_biases(store: &mut ParamStore, rng: &mut ChaCha8Rng) {
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        if store.name(id).ends_with(".b") {
            let n = store.get(id).len();
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-GRAD_BIAS_SPREAD..GRAD_BIAS_SPREAD)).collect();
            store.set_values(id, &v).unwrap();
        }
    }
}

/// Gradient of `loss(forward(x))` with respect to the input and to every
/// parameter.
fn full_check<F, L>(store: &ParamStore, x: &Tensor, forward: F, loss: L) -> Result<GradReport>
where
    F: Fn(&mut Tape, &BoundParams, Var) -> Result<Var>,
    L: Fn(&mut Tape, Var) -> Result<Var>,
{
    let wrt_x = grad_check_report(
        |t, xv| {
            let p = store.bind(t);
            let y = forward(t, &p, xv)?;
            loss(t, y)
        },
        x,
        &GRAD_OPTS,
    )?;
    let wrt_p = grad_check_report(
        |t, flat| {
            let p = store.bind_flat(t, flat)?;
            let xv = t.constant(x.clone());
            let y = forward(t, &p, xv)?;
            loss(t, y)
        },
        &store.flatten(),
        &GRAD_OPTS,
    )?;
    Ok(merge(wrt_x, wrt_p))
}

fn layer_check<F>(store: &mut ParamStore, x: &Tensor, out_width: usize, rng: &mut ChaCha8Rng, forward: F) -> Result<GradReport>
where
    F: Fn(&mut Tape, &BoundParams, Var) -> Result<Var>,
{
    randomize_biases(store, rng);
    let r = random_tensor(rng, &[out_width, 1]);
    full_check(store, x, forward, |t, y| project(t, y, &r))
}

fn criterion_1() -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let cloud = random_cloud(&mut rng, GRAD_POINTS);
    let near = knn_with(&cloud, REDUCED_K, false, KnnStrategy::BruteForce)?;
    let far = dilated_neighbors(&cloud, REDUCED_K, 2, false)?;
    let feats = random_tensor(&mut rng, &[GRAD_POINTS, REDUCED_C]);
    let mut results: Vec<(String, GradReport)> = Vec::new();
    let mut init = Initializer::new(7);

    {
        let mut s = ParamStore::new();
        let l = Linear::new(&mut s, &mut init, "l", REDUCED_C, REDUCED_C);
        let e = layer_check(&mut s, &feats, REDUCED_C, &mut rng, |t, p, x| l.forward_relu(t, p, x))?;
        results.push(("linear".into(), e));
    }
    {
        let mut s = ParamStore::new();
        let l = EdgeConv::new(&mut s, &mut init, "e", REDUCED_C, REDUCED_C);
        let e = layer_check(&mut s, &feats, REDUCED_C, &mut rng, |t, p, x| l.forward(t, p, x, &near))?;
        results.push(("edge_conv".into(), e));
    }
    for (d, nbrs) in [(1, &near), (2, &far)] {
        let mut s = ParamStore::new();
        let l = DenseGcn::new(&mut s, &mut init, "g", REDUCED_C, REDUCED_C, REDUCED_K, d);
        let e = layer_check(&mut s, &feats, l.cout(), &mut rng, |t, p, x| l.forward(t, p, x, nbrs))?;
        results.push((format!("dense_gcn d={d}"), e));
    }
    {
        let mut s = ParamStore::new();
        let l = Inception::new(&mut s, &mut init, "i", REDUCED_C, REDUCED_C, REDUCED_C, REDUCED_K, (1, 2));
        let e = layer_check(&mut s, &feats, l.cout(), &mut rng, |t, p, x| l.forward(t, p, x, &cloud))?;
        results.push(("inception".into(), e));
    }
    for kind in UpsamplerKind::ALL {
        let mut s = ParamStore::new();
        let l = Upsampler::new(kind, &mut s, &mut init, "u", REDUCED_C, 4)?;
        let e = layer_check(&mut s, &feats, REDUCED_C, &mut rng, |t, p, x| l.forward(t, p, x, &near))?;
        results.push((format!("upsampler {kind}"), e));
    }
    let gt = random_cloud(&mut rng, 4 * GRAD_POINTS);
    let pred = random_cloud(&mut rng, 4 * GRAD_POINTS).to_tensor();
    results.push(("chamfer".into(), grad_check_report(|t, v| chamfer(t, v, &gt), &pred, &GRAD_OPTS)?));

    let mut cfg = ModelConfig::reduced();
    assert_eq!((cfg.k, cfg.growth), (REDUCED_K, REDUCED_C));
    for kind in UpsamplerKind::ALL {
        cfg.upsampler = kind;
        let (model, mut store) = init_params(&cfg, 3)?;
        randomize_biases(&mut store, &mut rng);
        let graphs = model.graphs(&cloud)?;
        let e = full_check(
            &store,
            &cloud.to_tensor(),
            |t, p, xv| model.forward_with(t, p, xv, &graphs),
            |t, y| chamfer(t, y, &gt),
        )?;
        results.push((format!("chamfer∘model {kind}"), e));
    }
    let (name, worst) = results
        .iter()
        .max_by(|a, b| a.1.worst.total_cmp(&b.1.worst))
        .map(|(n, r)| (n.clone(), r.worst))
        .unwrap();
    let checked: usize = results.iter().map(|r| r.1.checked).sum();
    let skipped: usize = results.iter().map(|r| r.1.skipped).sum();
    let skip_share = skipped as f64 / (checked + skipped) as f64;
    Ok(verdict(
        worst <= GRAD_TOL && skip_share <= GRAD_MAX_SKIPPED,
        format!(
            "{} functions, {checked} coordinates, max rel err {worst:.2e} at {name} (tol {GRAD_TOL:.0e}); \
             {skipped} kink-straddling coordinates skipped ({:.2}%, limit {:.0}%)",
            results.len(),
            100.0 * skip_share,
            100.0 * GRAD_MAX_SKIPPED
        ),
    ))
}

/// Squared distances with nearest-by-lowest-index, the reference rule.
fn nearest_reference(p: Point3, targets: &[Point3]) -> usize {
    let d2 = |q: &Point3| (0..3).map(|c| (p[c] - q[c]).powi(2)).sum::<f64>();
    let mut best = 0;
    for (j, q) in targets.iter().enumerate() {
        if d2(q) < d2(&targets[best]) {
            best = j;
        }
    }
    best
}

fn chamfer_reference(p: &[Point3], q: &[Point3]) -> (f64, Vec<f64>) {
    let d2 = |a: &Point3, b: &Point3| (0..3).map(|c| (a[c] - b[c]).powi(2)).sum::<f64>();
    let mut value = 0.0;
    let mut grad = vec![0.0; p.len() * 3];
    for (i, a) in p.iter().enumerate() {
        let j = nearest_reference(*a, q);
        value += d2(a, &q[j]) / p.len() as f64;
        for c in 0..3 {
            grad[i * 3 + c] += 2.0 * (a[c] - q[j][c]) / p.len() as f64;
        }
    }
    for b in q {
        let i = nearest_reference(*b, p);
        value += d2(&p[i], b) / q.len() as f64;
        for c in 0..3 {
            grad[i * 3 + c] += 2.0 * (p[i][c] - b[c]) / q.len() as f64;
        }
    }
    (value, grad)
}

fn criterion_2() -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut knn_mismatch = 0;
    for c in 0..KNN_CLOUDS {
        let cloud = random_cloud(&mut rng, KNN_POINTS);
        let k = [1, 8, 16, 40][c % 4];
        for include_self in [false, true] {
            let a = knn_with(&cloud, k, include_self, KnnStrategy::Grid)?;
            let b = knn_with(&cloud, k, include_self, KnnStrategy::BruteForce)?;
            if a != b {
                knn_mismatch += 1;
            }
        }
    }

    let mut bvh_worst = 0.0f64;
    for _ in 0..BVH_MESHES {
        let nv = rng.random_range(10..60);
        let verts = random_cloud(&mut rng, nv).into_points();
        let faces = (0..rng.random_range(20..120))
            .map(|_| [rng.random_range(0..nv), rng.random_range(0..nv), rng.random_range(0..nv)])
            .filter(|f| f[0] != f[1] && f[1] != f[2] && f[0] != f[2])
            .collect();
        let mesh = Mesh::new(verts, faces)?;
        let queries = random_cloud(&mut rng, 200).map(|p| [p[0] * 1.5, p[1] * 1.5, p[2] * 1.5])?;
        let bvh = Bvh::build(&mesh);
        let mut brute_sum = 0.0;
        for &q in queries.points() {
            let brute = mesh
                .triangles()
                .map(|t| point_triangle_distance(q, &t).unwrap_or(f64::INFINITY))
                .fold(f64::INFINITY, f64::min);
            brute_sum += brute;
            bvh_worst = bvh_worst.max((bvh.distance(q).unwrap() - brute).abs());
        }
        let mean = brute_sum / queries.len() as f64;
        bvh_worst = bvh_worst.max((p2f_with(&queries, &bvh)? - mean).abs());
        bvh_worst = bvh_worst.max((p2f(&queries, &mesh)? - mean).abs());
    }

    // Integer lattice points make exact distance ties common.
    let mut tie_worst = 0.0f64;
    for _ in 0..50 {
        let lattice = |rng: &mut ChaCha8Rng, n: usize| -> Vec<Point3> {
            (0..n)
                .map(|_| {
                    [
                        rng.random_range(-2..=2) as f64,
                        rng.random_range(-2..=2) as f64,
                        rng.random_range(-1..=1) as f64,
                    ]
                })
                .collect()
        };
        let (np, nq) = (rng.random_range(4..30), rng.random_range(4..30));
        let p = lattice(&mut rng, np);
        let q = lattice(&mut rng, nq);
        let (want, want_grad) = chamfer_reference(&p, &q);
        let gt = PointCloud::new(q)?;
        let mut t = Tape::new();
        let pv = t.leaf(PointCloud::new(p)?.to_tensor());
        let loss = chamfer(&mut t, pv, &gt)?;
        let got = t.value(loss).item().unwrap();
        let grads = t.backward(loss)?;
        tie_worst = tie_worst.max((got - want).abs());
        for (a, b) in grads.get(pv).unwrap().data().iter().zip(&want_grad) {
            tie_worst = tie_worst.max((a - b).abs());
        }
    }
    Ok(verdict(
        knn_mismatch == 0 && bvh_worst <= BVH_TOL && tie_worst <= TIE_TOL,
        format!(
            "knn mismatches {knn_mismatch}/{}; bvh max |Δ| {bvh_worst:.1e} (tol {BVH_TOL:.0e}); chamfer tie max |Δ| {tie_worst:.1e} (tol {TIE_TOL:.0e})",
            2 * KNN_CLOUDS
        ),
    ))
}

fn criterion_3() -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut bad = 0;
    let mut cases = 0;
    for n in [1, 3, 7] {
        for c in [1, 2, 5] {
            for r in [1, 2, 4] {
                cases += 1;
                let x = random_tensor(&mut rng, &[n, r * c]);
                let mut t = Tape::new();
                let v = t.constant(x.clone());
                let s = t.periodic_shuffle(v, r)?;
                let back = t.inverse_shuffle(s, r)?;
                let y = t.value(s);
                let layout_ok = y.shape() == [r * n, c]
                    && (0..n).all(|i| (0..r).all(|j| (0..c).all(|ch| y.row(i * r + j)[ch] == x.row(i)[j * c + ch])));
                if !layout_ok || t.value(back) != &x {
                    bad += 1;
                }
            }
        }
    }
    let cloud = random_cloud(&mut rng, 32);
    let nbrs = knn_with(&cloud, REDUCED_K, false, KnnStrategy::BruteForce)?;
    let feats = random_tensor(&mut rng, &[32, REDUCED_C]);
    let mut shape_bad = Vec::new();
    for r in [1, 2, 4] {
        let mut s = ParamStore::new();
        let up = Upsampler::new(
            UpsamplerKind::NodeShuffle,
            &mut s,
            &mut Initializer::new(r as u64),
            "u",
            REDUCED_C,
            r,
        )?;
        let mut t = Tape::new();
        let p = s.bind(&mut t);
        let x = t.constant(feats.clone());
        let y = up.forward(&mut t, &p, x, &nbrs)?;
        if t.value(y).shape() != [r * 32, REDUCED_C] {
            shape_bad.push(r);
        }
    }
    Ok(verdict(
        bad == 0 && shape_bad.is_empty(),
        format!("{bad}/{cases} shuffle cases wrong; NodeShuffle shape failures at r={shape_bad:?}"),
    ))
}

fn criterion_4() -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let cfg = ModelConfig::default();
    let (model, store) = init_params(&cfg, 11)?;
    let mut init = Initializer::new(12);
    let mut s = ParamStore::new();
    let ec = EdgeConv::new(&mut s, &mut init, "e", 3, 16);
    let gcn = DenseGcn::new(&mut s, &mut init, "g", 3, 8, cfg.k, 2);
    let inc = Inception::new(&mut s, &mut init, "i", 3, 8, 8, cfg.k, cfg.dilations);
    let mut failures = Vec::new();
    for trial in 0..EQUIV_PERMS {
        let cloud = random_cloud(&mut rng, EQUIV_POINTS);
        let perm = permutation(&mut rng, EQUIV_POINTS);
        let pc = cloud.select(&perm)?;
        let run = |c: &PointCloud| -> Result<[Tensor; 4]> {
            let mut t = Tape::new();
            let p = s.bind(&mut t);
            let x = t.constant(c.to_tensor());
            let near = knn_with(c, cfg.k, false, KnnStrategy::Auto)?;
            let far = dilated_neighbors(c, cfg.k, 2, false)?;
            let a = ec.forward(&mut t, &p, x, &near)?;
            let b = gcn.forward(&mut t, &p, x, &far)?;
            let i = inc.forward(&mut t, &p, x, c)?;
            let mp = store.bind(&mut t);
            let m = model.forward(&mut t, &mp, c)?;
            Ok([a, b, i, m].map(|v| t.value(v).clone()))
        };
        let base = run(&cloud)?;
        let moved = run(&pc)?;
        for (name, (b, m)) in ["edge_conv", "dense_gcn", "inception", "model"].iter().zip(base.iter().zip(&moved)) {
            let expect = if *name == "model" {
                let r = cfg.ratio;
                let rows: Vec<usize> = perm.iter().flat_map(|&i| (0..r).map(move |j| i * r + j)).collect();
                permute_rows(b, &rows)
            } else {
                permute_rows(b, &perm)
            };
            if &expect != m {
                failures.push(format!("{name}#{trial}"));
            }
        }
    }
    Ok(verdict(
        failures.is_empty(),
        format!("{EQUIV_PERMS} permutations × 4 layers, exact mismatches: {failures:?}"),
    ))
}

fn rotation(rng: &mut ChaCha8Rng) -> [[f64; 3]; 3] {
    let (a, b, c): (f64, f64, f64) = (
        rng.random_range(0.0..6.3),
        rng.random_range(0.0..6.3),
        rng.random_range(0.0..6.3),
    );
    let rz = [[a.cos(), -a.sin(), 0.0], [a.sin(), a.cos(), 0.0], [0.0, 0.0, 1.0]];
    let ry = [[b.cos(), 0.0, b.sin()], [0.0, 1.0, 0.0], [-b.sin(), 0.0, b.cos()]];
    let rx = [[1.0, 0.0, 0.0], [0.0, c.cos(), -c.sin()], [0.0, c.sin(), c.cos()]];
    let mul = |m: [[f64; 3]; 3], n: [[f64; 3]; 3]| {
        let mut o = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                o[i][j] = (0..3).map(|k| m[i][k] * n[k][j]).sum();
            }
        }
        o
    };
    mul(mul(rz, ry), rx)
}

fn criterion_5() -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let np = rng.random_range(1..200);
        let nq = rng.random_range(1..200);
        let p = random_cloud(&mut rng, np);
        let q = random_cloud(&mut rng, nq);
        let cd = chamfer_distance(&p, &q);
        let hd = hausdorff(&p, &q);
        worst = worst.max((cd - chamfer_distance(&q, &p)).abs());
        worst = worst.max((hd - hausdorff(&q, &p)).abs());
        let s = rng.random_range(0.1..5.0);
        let sp = p.map(|v| v.map(|x| x * s))?;
        let sq = q.map(|v| v.map(|x| x * s))?;
        worst = worst.max((chamfer_distance(&sp, &sq) - s * s * cd).abs());
        worst = worst.max((hausdorff(&sp, &sq) - s * hd).abs());
        let rot = rotation(&mut rng);
        let shift: Point3 = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        let rigid = |v: Point3| -> Point3 {
            let mut o = shift;
            for i in 0..3 {
                o[i] += (0..3).map(|k| rot[i][k] * v[k]).sum::<f64>();
            }
            o
        };
        let rp = p.map(rigid)?;
        let rq = q.map(rigid)?;
        worst = worst.max((chamfer_distance(&rp, &rq) - cd).abs());
        worst = worst.max((hausdorff(&rp, &rq) - hd).abs());
    }
    Ok(verdict(
        worst <= METRIC_TOL,
        format!("50 instances, max |Δ| {worst:.2e} (tol {METRIC_TOL:.0e})"),
    ))
}

fn replicate(cloud: &PointCloud, r: usize) -> PointCloud {
    PointCloud::new(cloud.points().iter().flat_map(|&p| std::iter::repeat_n(p, r)).collect()).unwrap()
}

fn criterion_6() -> Result<Verdict> {
    let (name, mesh) = shapes::synthetic_pack(2)?.remove(1);
    let cfg = DatasetConfig {
        patches_per_mesh: 1,
        ..DatasetConfig::default()
    };
    let dense = poisson_sample(&mesh, cfg.dense_points, 17)?;
    let pair = cut_patches(&dense, &cfg, &name)?.remove(0);
    let model_cfg = ModelConfig::default();
    let (model, params) = init_params(&model_cfg, 0)?;
    let train_cfg = TrainConfig {
        batch_size: 1,
        augment: AugmentConfig::OFF,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(model, params, train_cfg)?;
    let initial = chamfer_distance(&trainer.model.predict(&trainer.params, &pair.input)?, &pair.gt);
    for _ in 0..OVERFIT_STEPS {
        trainer.step(&[&pair])?;
    }
    let fin = chamfer_distance(&trainer.model.predict(&trainer.params, &pair.input)?, &pair.gt);
    let baseline = chamfer_distance(&replicate(&pair.input, model_cfg.ratio), &pair.gt);
    Ok(verdict(
        fin < OVERFIT_FRACTION * initial && fin < baseline,
        format!(
            "{name} patch, {OVERFIT_STEPS} steps: initial {initial:.3e}, final {fin:.3e} ({:.1}%), replicate baseline {baseline:.3e}",
            100.0 * fin / initial
        ),
    ))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn held_out_cd(model: &Model, params: &ParamStore, tests: &[pugcn::pipeline::TestPair]) -> Result<f64> {
    let mut total = 0.0;
    for t in tests {
        let up = upsample_cloud(model, params, &t.input, &PatchConfig::default())?;
        total += chamfer_distance(&up.cloud, &t.gt);
    }
    Ok(total / tests.len() as f64)
}

fn criterion_7() -> Result<Verdict> {
    let dir = tempfile::tempdir()?;
    let meshes = dir.path().join("meshes");
    std::fs::create_dir_all(&meshes)?;
    for (name, mesh) in shapes::synthetic_pack(ABLATION_MESHES)? {
        write_off(meshes.join(format!("{name}.off")), &mesh)?;
    }
    let data_cfg = DatasetConfig {
        patches_per_mesh: ABLATION_PATCHES,
        ..DatasetConfig::default()
    };
    let manifest = dir.path().join("data");
    generate_dataset(&meshes, &manifest, &data_cfg, 0)?;
    let pairs: Vec<PatchPair> = load_patch_pairs(manifest.join("manifest.json"))?;
    let tests = load_test_pairs(manifest.join("manifest.json"))?;

    let mut medians = Vec::new();
    let mut table = Vec::new();
    for kind in UpsamplerKind::ALL {
        let mut per_seed = Vec::new();
        for seed in ABLATION_SEEDS {
            let model_cfg = ModelConfig {
                upsampler: kind,
                ..ModelConfig::default()
            };
            let train_cfg = TrainConfig {
                batch_size: ABLATION_BATCH,
                epochs: ABLATION_EPOCHS,
                seed,
                ..TrainConfig::default()
            };
            let out = pugcn::train::train(&pairs, &model_cfg, &train_cfg)?;
            let cd = held_out_cd(&out.model, &out.params, &tests)?;
            eprintln!("  ablation {kind} seed {seed}: held-out cd {cd:.4e}");
            per_seed.push(cd);
        }
        let m = median(per_seed);
        table.push(format!("{kind} {m:.4e}"));
        medians.push(m);
    }
    let hard = medians[0] < medians[2];
    let soft = medians[0] <= medians[1] && medians[1] <= medians[2];
    Ok(verdict(
        hard,
        format!(
            "median held-out cd: {}; NodeShuffle < Duplicate: {hard}; full ordering (soft): {soft}",
            table.join(", ")
        ),
    ))
}

fn criterion_8() -> Result<Verdict> {
    let (_, store) = init_params(&ModelConfig::default(), 0)?;
    let n = param_count(&store);
    Ok(verdict(
        (BUDGET.0..=BUDGET.1).contains(&n),
        format!("default config has {n} parameters (budget [{}, {}])", BUDGET.0, BUDGET.1),
    ))
}

fn criterion_9() -> Result<Verdict> {
    let dir = tempfile::tempdir()?;
    let meshes = dir.path().join("meshes");
    std::fs::create_dir_all(&meshes)?;
    let pack = shapes::synthetic_pack(3)?;
    for (name, mesh) in &pack {
        write_off(meshes.join(format!("{name}.off")), mesh)?;
    }
    let out = dir.path().join("data");
    let manifest = generate_dataset(&meshes, &out, &DatasetConfig::default(), 0)?;
    let pairs = load_patch_pairs(out.join("manifest.json"))?;
    let tests = load_test_pairs(out.join("manifest.json"))?;
    let counts_ok = manifest.patch_count() == 150 && pairs.len() == 150 && tests.len() == 3;

    let (model, params) = init_params(&ModelConfig::default(), 0)?;
    let up = upsample_cloud(&model, &params, &tests[0].input, &PatchConfig::default())?;
    let sizes_ok = tests[0].input.len() == 2048 && up.cloud.len() == 8192;

    let mut worst_cd_hd = 0.0f64;
    let mut worst_p2f = 0.0f64;
    for (t, (_, mesh)) in tests.iter().zip(&pack) {
        worst_cd_hd = worst_cd_hd
            .max(chamfer_distance(&t.gt, &t.gt))
            .max(hausdorff(&t.gt, &t.gt));
        worst_p2f = worst_p2f.max(p2f(&t.gt, mesh)?);
    }
    let checks = run_selfcheck(0);
    let self_ok = checks.iter().all(|c| c.passed);
    Ok(verdict(
        counts_ok && sizes_ok && worst_cd_hd == 0.0 && worst_p2f <= P2F_ON_MESH_TOL && self_ok,
        format!(
            "{} pairs + {} tests; upsample {} → {}; pred==gt cd/hd {worst_cd_hd:.1e}, p2f {worst_p2f:.1e}; selfcheck {}/{} passed",
            pairs.len(),
            tests.len(),
            tests[0].input.len(),
            up.cloud.len(),
            checks.iter().filter(|c| c.passed).count(),
            checks.len()
        ),
    ))
}

type Criterion = (usize, &'static str, fn() -> Result<Verdict>);

const CRITERIA: [Criterion; 9] = [
    (1, "gradient integrity", criterion_1),
    (2, "oracle equivalence", criterion_2),
    (3, "shuffle correctness", criterion_3),
    (4, "permutation equivariance", criterion_4),
    (5, "metric laws", criterion_5),
    (6, "overfit probe", criterion_6),
    (7, "directional ablation", criterion_7),
    (8, "parameter budget", criterion_8),
    (9, "pipeline contract", criterion_9),
];

fn main() -> ExitCode {
    let picked: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, run) in CRITERIA {
        if !picked.is_empty() && !picked.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let v = run().unwrap_or_else(|e| verdict(false, format!("error: {e}")));
        let secs = start.elapsed().as_secs_f64();
        if !v.passed {
            failed += 1;
        }
        println!(
            "{} {id}. {name}: {} [{secs:.1}s]",
            if v.passed { "PASS" } else { "FAIL" },
            v.detail
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
