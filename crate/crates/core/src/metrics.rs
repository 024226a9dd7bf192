//! Chamfer loss, Hausdorff and point-to-surface distances, and the
//! evaluation report.

use std::fmt;
use std::hash::{Hash, Hasher};
use std::time::Instant;

use crate::error::{Error, Result};
use crate::geometry::{knn, nearest_neighbors, normalize, Bvh, KnnStrategy, Mesh, Point3, PointCloud};
use crate::model::{param_count, Model};
use crate::tensor::{CustomOp, ParamStore, Tape, Tensor, Var};

/// Points in the patch used for forward timing.
pub const TIMING_PATCH: usize = 256;
/// Timed forward runs, after one warm-up.
pub const TIMING_RUNS: usize = 5;

fn check_points(op: &str, t: &Tensor) -> Result<usize> {
    if t.rank() != 2 || t.cols() != 3 {
        return Err(Error::Dimension {
            op: "chamfer",
            detail: format!("{op} expects N×3 points, got {:?}", t.shape()),
        });
    }
    if t.rows() == 0 {
        return Err(Error::Argument(format!("{op} of an empty cloud")));
    }
    Ok(t.rows())
}

fn as_points(t: &Tensor) -> Vec<Point3> {
    t.data().chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()
}

/// `(1/|P|)·Σ_p min_q ‖p−q‖² + (1/|Q|)·Σ_q min_p ‖p−q‖²`, differentiable in
/// the predicted points `pred` (an `N×3` variable). Nearest-neighbor ties
/// resolve to the lowest index.
pub fn chamfer(tape: &mut Tape, pred: Var, gt: &PointCloud) -> Result<Var> {
    let n = check_points("chamfer", tape.value(pred))?;
    let p = as_points(tape.value(pred));
    let q = gt.points();
    let to_q = nearest_neighbors(&p, q, KnnStrategy::Auto);
    let to_p = nearest_neighbors(q, &p, KnnStrategy::Auto);
    let fwd: f64 = to_q.iter().map(|&(_, d)| d).sum::<f64>() / n as f64;
    let bwd: f64 = to_p.iter().map(|&(_, d)| d).sum::<f64>() / q.len() as f64;
    let op = ChamferOp {
        to_q: to_q.into_iter().map(|(j, _)| j).collect(),
        to_p: to_p.into_iter().map(|(i, _)| i).collect(),
        gt: q.to_vec(),
    };
    Ok(tape.custom(&[pred], Tensor::scalar(fwd + bwd), Box::new(op)))
}

struct ChamferOp {
    to_q: Vec<usize>,
    to_p: Vec<usize>,
    gt: Vec<Point3>,
}

impl CustomOp for ChamferOp {
    fn name(&self) -> &'static str {
        "chamfer"
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, g: &Tensor, needs: &[bool]) -> Vec<Option<Tensor>> {
        if !needs[0] {
            return vec![None];
        }
        let p = inputs[0].data();
        let n = inputs[0].rows();
        let g = g.data()[0];
        let a = 2.0 * g / n as f64;
        let b = 2.0 * g / self.gt.len() as f64;
        let mut out = vec![0.0; n * 3];
        for (i, &j) in self.to_q.iter().enumerate() {
            for c in 0..3 {
                out[i * 3 + c] += a * (p[i * 3 + c] - self.gt[j][c]);
            }
        }
        for (j, &i) in self.to_p.iter().enumerate() {
            for c in 0..3 {
                out[i * 3 + c] += b * (p[i * 3 + c] - self.gt[j][c]);
            }
        }
        vec![Some(Tensor::from_parts(vec![n, 3], out))]
    }

    fn branches(&self, _output: &Tensor, mut state: &mut dyn Hasher) {
        self.to_q.hash(&mut state);
        self.to_p.hash(&mut state);
    }
}

/// Chamfer distance between two clouds.
pub fn chamfer_distance(pred: &PointCloud, gt: &PointCloud) -> f64 {
    let mean = |a: &[Point3], b: &[Point3]| {
        nearest_neighbors(a, b, KnnStrategy::Auto).iter().map(|&(_, d)| d).sum::<f64>() / a.len() as f64
    };
    mean(pred.points(), gt.points()) + mean(gt.points(), pred.points())
}

/// Symmetric Hausdorff distance (Euclidean, not squared).
pub fn hausdorff(a: &PointCloud, b: &PointCloud) -> f64 {
    let directed = |x: &[Point3], y: &[Point3]| {
        nearest_neighbors(x, y, KnnStrategy::Auto)
            .iter()
            .map(|&(_, d)| d)
            .fold(0.0, f64::max)
    };
    directed(a.points(), b.points())
        .max(directed(b.points(), a.points()))
        .sqrt()
}

/// Mean unsigned distance from each point to the mesh surface.
pub fn p2f(cloud: &PointCloud, mesh: &Mesh) -> Result<f64> {
    p2f_with(cloud, &Bvh::build(mesh))
}

/// [`p2f`] against a prebuilt hierarchy.
pub fn p2f_with(cloud: &PointCloud, bvh: &Bvh) -> Result<f64> {
    if bvh.is_empty() {
        return Err(Error::Argument("point-to-surface distance needs a non-empty mesh".into()));
    }
    let total: f64 = cloud
        .points()
        .iter()
        .map(|&p| bvh.distance(p).expect("non-empty hierarchy"))
        .sum();
    Ok(total / cloud.len() as f64)
}

/// Evaluation of one predicted cloud. Distances are stored raw; the
/// `Display` form scales them by 10³.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub cd: f64,
    pub hd: f64,
    pub p2f_mean: Option<f64>,
    pub param_count: Option<usize>,
    pub time_per_patch_ms: Option<f64>,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "cd,hd,p2f,params,time_ms";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_default();
        format!(
            "{:e},{:e},{},{},{}",
            self.cd,
            self.hd,
            opt(self.p2f_mean.map(|v| format!("{v:e}"))),
            opt(self.param_count.map(|v| v.to_string())),
            opt(self.time_per_patch_ms.map(|v| format!("{v:.4}"))),
        )
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "units=1e-3")?;
        writeln!(f, "cd={:.6}", self.cd * 1e3)?;
        writeln!(f, "hd={:.6}", self.hd * 1e3)?;
        if let Some(p) = self.p2f_mean {
            writeln!(f, "p2f={:.6}", p * 1e3)?;
        }
        if let Some(n) = self.param_count {
            writeln!(f, "params={n}")?;
        }
        if let Some(t) = self.time_per_patch_ms {
            writeln!(f, "time_ms={t:.4}")?;
        }
        Ok(())
    }
}

/// Mean wall time in milliseconds of one forward pass over `patch`,
/// over `runs` runs after one warm-up.
pub fn time_forward(model: &Model, params: &ParamStore, patch: &PointCloud, runs: usize) -> Result<f64> {
    model.predict(params, patch)?;
    let start = Instant::now();
    for _ in 0..runs.max(1) {
        model.predict(params, patch)?;
    }
    Ok(start.elapsed().as_secs_f64() * 1e3 / runs.max(1) as f64)
}

/// The `TIMING_PATCH` points of `cloud` nearest its first point,
/// normalized; the whole cloud if it is smaller.
pub fn timing_patch(cloud: &PointCloud) -> Result<PointCloud> {
    let m = TIMING_PATCH.min(cloud.len());
    let nb = knn(cloud, m, true)?;
    let patch = cloud.select(nb.row(0))?;
    Ok(normalize(&patch)?.0)
}

/// CD, HD, optional P2F, and, when a model is given, its size and forward
/// time on a patch cut from `gt`.
pub fn evaluate(
    pred: &PointCloud,
    gt: &PointCloud,
    mesh: Option<&Mesh>,
    model: Option<(&Model, &ParamStore)>,
) -> Result<MetricsReport> {
    let p2f_mean = mesh.map(|m| p2f(pred, m)).transpose()?;
    let (param_count, time_per_patch_ms) = match model {
        None => (None, None),
        Some((model, params)) => {
            let patch = timing_patch(gt)?;
            (
                Some(param_count(params)),
                Some(time_forward(model, params, &patch, TIMING_RUNS)?),
            )
        }
    };
    let report = MetricsReport {
        cd: chamfer_distance(pred, gt),
        hd: hausdorff(pred, gt),
        p2f_mean,
        param_count,
        time_per_patch_ms,
    };
    if !(report.cd.is_finite() && report.hd.is_finite() && report.p2f_mean.is_none_or(f64::is_finite)) {
        return Err(Error::NonFinite("metrics"));
    }
    Ok(report)
}
