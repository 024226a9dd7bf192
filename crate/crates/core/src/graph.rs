//! Graph convolution layers: EdgeConv, DenseGCN blocks and the Inception
//! DenseGCN extractor.

use std::hash::{Hash, Hasher};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{dim_err, Result};
use crate::geometry::{dilated_neighbors, NeighborIndex, PointCloud};
use crate::tensor::kernels::{col_sum_acc, matmul_acc, matmul_at_acc, matmul_bt_acc};
use crate::tensor::{BoundParams, CustomOp, ParamId, ParamStore, Tape, Tensor, Var};

/// Seeded Glorot-uniform weights and zero biases.
#[derive(Clone, Debug)]
pub struct Initializer {
    rng: ChaCha8Rng,
}

impl Initializer {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
    pub fn glorot(&mut self, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| self.rng.random_range(-a..a)).collect();
        Tensor::from_parts(shape.to_vec(), data)
    }

    pub fn weight(&mut self, rows: usize, cols: usize) -> Tensor {
        self.glorot(&[rows, cols], rows, cols)
    }
}

/// Per-point affine map `x·W + b`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub cin: usize,
    pub cout: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, init: &mut Initializer, name: &str, cin: usize, cout: usize) -> Self {
        let w = store.add(format!("{name}.w"), init.weight(cin, cout));
        let b = store.add(format!("{name}.b"), Tensor::zeros(&[cout]));
        Self { w, b, cin, cout }
    }

    pub fn forward(&self, tape: &mut Tape, p: &BoundParams, x: Var) -> Result<Var> {
        tape.linear(x, p.var(self.w), p.var(self.b))
    }

    /// `relu(x·W + b)`
    pub fn forward_relu(&self, tape: &mut Tape, p: &BoundParams, x: Var) -> Result<Var> {
        let y = self.forward(tape, p, x)?;
        Ok(tape.relu(y))
    }
}

/// EdgeConv weights: `W` is `2·Cin × Cout`, rows `[0, Cin)` acting on the
/// center feature and rows `[Cin, 2·Cin)` on the neighbor offset.
#[derive(Clone, Debug)]
pub struct EdgeConv {
    pub w: ParamId,
    pub b: ParamId,
    pub cin: usize,
    pub cout: usize,
}

impl EdgeConv {
    pub fn new(store: &mut ParamStore, init: &mut Initializer, name: &str, cin: usize, cout: usize) -> Self {
        let w = store.add(format!("{name}.w"), init.weight(2 * cin, cout));
        let b = store.add(format!("{name}.b"), Tensor::zeros(&[cout]));
        Self { w, b, cin, cout }
    }

    pub fn forward(&self, tape: &mut Tape, p: &BoundParams, x: Var, nbrs: &NeighborIndex) -> Result<Var> {
        edge_conv(tape, x, nbrs, p.var(self.w), p.var(self.b))
    }
}

/// `out_i = max_j relu([x_i ∥ x_j − x_i]·W + b)` over the neighbors `j` of `i`.
///
/// Evaluated without materializing edge features: the edge pre-activation
/// splits into `x_i·(W_c − W_o) + b` plus `x_j·W_o`, and relu commutes with
/// the max. Ties of the max resolve to the lowest neighbor slot.
pub fn edge_conv(tape: &mut Tape, x: Var, nbrs: &NeighborIndex, w: Var, b: Var) -> Result<Var> {
    let (n, cin) = tape.value(x).matrix_dims("edge_conv")?;
    let (wr, cout) = tape.value(w).matrix_dims("edge_conv")?;
    if wr != 2 * cin || tape.value(b).shape() != [cout] {
        return Err(dim_err(
            "edge_conv",
            format!(
                "features {:?} need W of [{} , Cout] and b of [Cout]; got W {:?}, b {:?}",
                tape.value(x).shape(),
                2 * cin,
                tape.value(w).shape(),
                tape.value(b).shape()
            ),
        ));
    }
    if nbrs.rows() != n {
        return Err(dim_err(
            "edge_conv",
            format!("neighbor table has {} rows for {n} points", nbrs.rows()),
        ));
    }
    let k = nbrs.k();
    let merged = merged_weights(tape.value(w).data(), cin, cout);
    let mut ab = vec![0.0; n * 2 * cout];
    matmul_acc(tape.value(x).data(), &merged, &mut ab, n, cin, 2 * cout);
    let bias = tape.value(b).data();

    let mut out = vec![0.0; n * cout];
    let mut argmax = vec![0u32; n * cout];
    let idx = nbrs.as_slice();
    for i in 0..n {
        let a_row = &ab[i * 2 * cout..i * 2 * cout + cout];
        let o_row = &mut out[i * cout..(i + 1) * cout];
        let m_row = &mut argmax[i * cout..(i + 1) * cout];
        for (slot, &j) in idx[i * k..(i + 1) * k].iter().enumerate() {
            let b_row = &ab[j * 2 * cout + cout..(j + 1) * 2 * cout];
            for c in 0..cout {
                let pre = a_row[c] + bias[c] + b_row[c];
                if slot == 0 || pre > o_row[c] {
                    o_row[c] = pre;
                    m_row[c] = slot as u32;
                }
            }
        }
        for v in o_row.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    }
    let op = EdgeConvOp {
        idx: idx.to_vec(),
        k,
        argmax,
        cin,
        cout,
    };
    Ok(tape.custom(&[x, w, b], Tensor::from_parts(vec![n, cout], out), Box::new(op)))
}

/// `[W_c − W_o | W_o]` as a `Cin × 2·Cout` matrix.
fn merged_weights(w: &[f64], cin: usize, cout: usize) -> Vec<f64> {
    let mut m = vec![0.0; cin * 2 * cout];
    for r in 0..cin {
        let center = &w[r * cout..(r + 1) * cout];
        let offset = &w[(cin + r) * cout..(cin + r + 1) * cout];
        let row = &mut m[r * 2 * cout..(r + 1) * 2 * cout];
        for c in 0..cout {
            row[c] = center[c] - offset[c];
            row[cout + c] = offset[c];
        }
    }
    m
}

struct EdgeConvOp {
    idx: Vec<usize>,
    k: usize,
    argmax: Vec<u32>,
    cin: usize,
    cout: usize,
}

impl CustomOp for EdgeConvOp {
    fn name(&self) -> &'static str {
        "edge_conv"
    }

    fn backward(&self, inputs: &[&Tensor], output: &Tensor, g: &Tensor, needs: &[bool]) -> Vec<Option<Tensor>> {
        let (x, w) = (inputs[0], inputs[1]);
        let (cin, cout, k) = (self.cin, self.cout, self.k);
        let n = x.rows();
        let two = 2 * cout;
        // Gradient of the pre-activation, split into center (A) and neighbor (B) halves.
        let mut gab = vec![0.0; n * two];
        for i in 0..n {
            for c in 0..cout {
                let pos = i * cout + c;
                if output.data()[pos] <= 0.0 {
                    continue;
                }
                let gv = g.data()[pos];
                gab[i * two + c] += gv;
                let j = self.idx[i * k + self.argmax[pos] as usize];
                gab[j * two + cout + c] += gv;
            }
        }
        let gx = needs[0].then(|| {
            let merged = merged_weights(w.data(), cin, cout);
            let mut gx = vec![0.0; n * cin];
            matmul_bt_acc(&gab, &merged, &mut gx, n, cin, two);
            Tensor::from_parts(vec![n, cin], gx)
        });
        let gw = needs[1].then(|| {
            let mut gm = vec![0.0; cin * two];
            matmul_at_acc(x.data(), &gab, &mut gm, n, cin, two);
            let mut gw = vec![0.0; 2 * cin * cout];
            for r in 0..cin {
                for c in 0..cout {
                    let d_center = gm[r * two + c];
                    let d_offset = gm[r * two + cout + c];
                    gw[r * cout + c] = d_center;
                    gw[(cin + r) * cout + c] = d_offset - d_center;
                }
            }
            Tensor::from_parts(vec![2 * cin, cout], gw)
        });
        let gb = needs[2].then(|| {
            let mut gb = vec![0.0; cout];
            let mut ga = vec![0.0; n * cout];
            for i in 0..n {
                ga[i * cout..(i + 1) * cout].copy_from_slice(&gab[i * two..i * two + cout]);
            }
            col_sum_acc(&ga, &mut gb, n, cout);
            Tensor::from_parts(vec![cout], gb)
        });
        vec![gx, gw, gb]
    }

    fn branches(&self, output: &Tensor, mut state: &mut dyn Hasher) {
        self.argmax.hash(&mut state);
        for &v in output.data() {
            (v > 0.0).hash(&mut state);
        }
    }
}

/// Three densely connected EdgeConv layers sharing one neighbor graph.
#[derive(Clone, Debug)]
pub struct DenseGcn {
    pub layers: [EdgeConv; 3],
    pub k: usize,
    pub dilation: usize,
    pub growth: usize,
}

impl DenseGcn {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Initializer,
        name: &str,
        cin: usize,
        growth: usize,
        k: usize,
        dilation: usize,
    ) -> Self {
        let layers = [0, 1, 2].map(|l| {
            EdgeConv::new(store, init, &format!("{name}.gcn{l}"), cin + l * growth, growth)
        });
        Self {
            layers,
            k,
            dilation,
            growth,
        }
    }

    pub fn cin(&self) -> usize {
        self.layers[0].cin
    }

    pub fn cout(&self) -> usize {
        self.cin() + 3 * self.growth
    }

    /// `[x ∥ h₁ ∥ h₂ ∥ h₃]` where each `hₗ` sees everything before it.
    pub fn forward(&self, tape: &mut Tape, p: &BoundParams, x: Var, nbrs: &NeighborIndex) -> Result<Var> {
        if nbrs.k() != self.k || nbrs.dilation() != self.dilation {
            return Err(dim_err(
                "dense_gcn_block",
                format!(
                    "block expects k={}, d={}; graph has k={}, d={}",
                    self.k,
                    self.dilation,
                    nbrs.k(),
                    nbrs.dilation()
                ),
            ));
        }
        let mut feats = vec![x];
        let mut input = x;
        for layer in &self.layers {
            let h = layer.forward(tape, p, input, nbrs)?;
            feats.push(h);
            input = tape.concat_channels(&feats)?;
        }
        Ok(input)
    }
}

/// Neighbor graphs for the two Inception branches, built once per cloud.
#[derive(Clone, Debug)]
pub struct BranchGraphs {
    pub near: NeighborIndex,
    pub dilated: NeighborIndex,
}

impl BranchGraphs {
    pub fn build(cloud: &PointCloud, k: usize, dilations: (usize, usize)) -> Result<Self> {
        Ok(Self {
            near: dilated_neighbors(cloud, k, dilations.0, false)?,
            dilated: dilated_neighbors(cloud, k, dilations.1, false)?,
        })
    }
}

/// Bottleneck, two DenseGCN branches of different dilation, and a global
/// max-pooled summary, concatenated with the block input.
#[derive(Clone, Debug)]
pub struct Inception {
    pub bottleneck: Linear,
    pub branch1: DenseGcn,
    pub branch2: DenseGcn,
}

impl Inception {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        init: &mut Initializer,
        name: &str,
        cin: usize,
        bottleneck: usize,
        growth: usize,
        k: usize,
        dilations: (usize, usize),
    ) -> Self {
        Self {
            bottleneck: Linear::new(store, init, &format!("{name}.bottleneck"), cin, bottleneck),
            branch1: DenseGcn::new(store, init, &format!("{name}.branch1"), bottleneck, growth, k, dilations.0),
            branch2: DenseGcn::new(store, init, &format!("{name}.branch2"), bottleneck, growth, k, dilations.1),
        }
    }

    pub fn cin(&self) -> usize {
        self.bottleneck.cin
    }

    /// `2·(Cb + 3c) + Cb + Cin`
    pub fn cout(&self) -> usize {
        self.branch1.cout() + self.branch2.cout() + self.bottleneck.cout + self.cin()
    }

    /// Builds the branch graphs from `cloud` and applies the block.
    pub fn forward(&self, tape: &mut Tape, p: &BoundParams, x: Var, cloud: &PointCloud) -> Result<Var> {
        let n = tape.value(x).rows();
        if cloud.len() != n {
            return Err(dim_err(
                "inception_densegcn",
                format!("{} points for {n} feature rows", cloud.len()),
            ));
        }
        let graphs = BranchGraphs::build(
            cloud,
            self.branch1.k,
            (self.branch1.dilation, self.branch2.dilation),
        )?;
        self.forward_with(tape, p, x, &graphs)
    }

    /// `[y₁ ∥ y₂ ∥ tile(maxpool(z)) ∥ x]` with `z = relu(bottleneck(x))`.
    pub fn forward_with(&self, tape: &mut Tape, p: &BoundParams, x: Var, graphs: &BranchGraphs) -> Result<Var> {
        let n = tape.value(x).rows();
        let z = self.bottleneck.forward_relu(tape, p, x)?;
        let y1 = self.branch1.forward(tape, p, z, &graphs.near)?;
        let y2 = self.branch2.forward(tape, p, z, &graphs.dilated)?;
        let pooled = tape.global_max_pool(z)?;
        let g = tape.tile_rows(pooled, n)?;
        tape.concat_channels(&[y1, y2, g, x])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::knn;

    fn store_with_edge(cin: usize, cout: usize, w: Vec<f64>, b: Vec<f64>) -> (ParamStore, EdgeConv) {
        let mut s = ParamStore::new();
        let wid = s.add("w", Tensor::new(&[2 * cin, cout], w).unwrap());
        let bid = s.add("b", Tensor::new(&[cout], b).unwrap());
        (s, EdgeConv { w: wid, b: bid, cin, cout })
    }

    fn line_cloud(n: usize) -> PointCloud {
        PointCloud::new((0..n).map(|i| [i as f64 * 0.7, (i * i % 5) as f64, 0.0]).collect()).unwrap()
    }

    #[test]
    fn zero_weight_outputs_relu_bias() {
        let (store, layer) = store_with_edge(2, 3, vec![0.0; 12], vec![0.5, -1.0, 2.0]);
        let cloud = line_cloud(5);
        let nb = knn(&cloud, 2, false).unwrap();
        let mut t = Tape::new();
        let p = store.bind(&mut t);
        let x = t.constant(Tensor::new(&[5, 2], (0..10).map(|v| v as f64).collect()).unwrap());
        let y = layer.forward(&mut t, &p, x, &nb).unwrap();
        for i in 0..5 {
            assert_eq!(t.value(y).row(i), &[0.5, 0.0, 2.0]);
        }
    }

    #[test]
    fn identical_features_only_see_center_weights() {
        // Offset rows carry huge weights that must not matter when x_j == x_i.
        let w = vec![1.0, -1.0, 2.0, 0.5, 100.0, -100.0, 50.0, 75.0];
        let (store, layer) = store_with_edge(2, 2, w, vec![0.0, 0.0]);
        let cloud = line_cloud(4);
        let nb = knn(&cloud, 3, false).unwrap();
        let mut t = Tape::new();
        let p = store.bind(&mut t);
        let x = t.constant(Tensor::filled(&[4, 2], 1.0));
        let y = layer.forward(&mut t, &p, x, &nb).unwrap();
        for i in 0..4 {
            assert_eq!(t.value(y).row(i), &[3.0, 0.0]);
        }
    }

    #[test]
    fn width_mismatch_rejected() {
        let (store, layer) = store_with_edge(3, 2, vec![0.0; 12], vec![0.0; 2]);
        let nb = knn(&line_cloud(4), 1, false).unwrap();
        let mut t = Tape::new();
        let p = store.bind(&mut t);
        let x = t.constant(Tensor::zeros(&[4, 2]));
        assert!(layer.forward(&mut t, &p, x, &nb).is_err());
    }

    #[test]
    fn dense_block_widths_and_passthrough() {
        let mut store = ParamStore::new();
        let mut init = Initializer::new(1);
        let block = DenseGcn::new(&mut store, &mut init, "d", 32, 32, 4, 1);
        assert_eq!(block.cout(), 128);
        let cloud = line_cloud(12);
        let nb = knn(&cloud, 4, false).unwrap();
        let mut t = Tape::new();
        let p = store.bind(&mut t);
        let xt = Tensor::new(&[12, 32], (0..384).map(|v| ((v * 7) % 11) as f64 * 0.1).collect()).unwrap();
        let x = t.constant(xt.clone());
        let y = block.forward(&mut t, &p, x, &nb).unwrap();
        assert_eq!(t.value(y).shape(), &[12, 128]);
        for i in 0..12 {
            assert_eq!(&t.value(y).row(i)[..32], xt.row(i));
        }
        let wrong = knn(&cloud, 3, false).unwrap();
        assert!(block.forward(&mut t, &p, x, &wrong).is_err());
    }

    #[test]
    fn dense_block_with_zero_weights() {
        let mut store = ParamStore::new();
        let mut init = Initializer::new(2);
        let block = DenseGcn::new(&mut store, &mut init, "d", 2, 2, 2, 1);
        let biases = [[0.5, -0.5], [-1.0, 0.25], [2.0, 3.0]];
        for (l, layer) in block.layers.iter().enumerate() {
            let n = store.get(layer.w).len();
            store.set_values(layer.w, &vec![0.0; n]).unwrap();
            store.set_values(layer.b, &biases[l]).unwrap();
        }
        let cloud = line_cloud(5);
        let nb = knn(&cloud, 2, false).unwrap();
        let mut t = Tape::new();
        let p = store.bind(&mut t);
        let x = t.constant(Tensor::new(&[5, 2], (0..10).map(|v| v as f64).collect()).unwrap());
        let y = block.forward(&mut t, &p, x, &nb).unwrap();
        for i in 0..5 {
            let r = t.value(y).row(i);
            assert_eq!(&r[..2], &[2.0 * i as f64, 2.0 * i as f64 + 1.0]);
            assert_eq!(&r[2..], &[0.5, 0.0, 0.0, 0.25, 2.0, 3.0]);
        }
    }

    #[test]
    fn inception_shapes_and_passthrough() {
        let mut store = ParamStore::new();
        let mut init = Initializer::new(3);
        let block = Inception::new(&mut store, &mut init, "inc", 32, 32, 32, 4, (1, 2));
        assert_eq!(block.cout(), 320);
        let cloud = line_cloud(20);
        let mut t = Tape::new();
        let p = store.bind(&mut t);
        let xt = Tensor::new(&[20, 32], (0..640).map(|v| ((v * 13) % 17) as f64 * 0.05 - 0.4).collect()).unwrap();
        let x = t.constant(xt.clone());
        let y = block.forward(&mut t, &p, x, &cloud).unwrap();
        let out = t.value(y);
        assert_eq!(out.shape(), &[20, 320]);
        let g0 = out.row(0)[256..288].to_vec();
        for i in 0..20 {
            assert_eq!(&out.row(i)[288..], xt.row(i));
            assert_eq!(&out.row(i)[256..288], g0.as_slice());
        }
        let small = line_cloud(8);
        assert!(block.forward(&mut t, &p, x, &small).is_err());
    }
}
