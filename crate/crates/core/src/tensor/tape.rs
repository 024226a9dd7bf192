use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::hash::{Hash, Hasher};

use super::kernels::{col_sum_acc, matmul_acc, matmul_at_acc, matmul_bt_acc};
use super::Tensor;
use crate::error::{dim_err, Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// An operation whose forward pass is computed outside the tape and whose
/// vector-Jacobian product is supplied by the implementor.
pub trait CustomOp: Send + Sync {
    fn name(&self) -> &'static str;

    /// Gradients for each input given the upstream gradient of the output.
    /// Entries for which `needs[i]` is false may be `None`.
    fn backward(
        &self,
        inputs: &[&Tensor],
        output: &Tensor,
        grad_out: &Tensor,
        needs: &[bool],
    ) -> Vec<Option<Tensor>>;

    /// Feeds the discrete choices of the forward pass (max winners, masks,
    /// matches) into `state`. See [`Tape::branch_signature`].
    fn branches(&self, _output: &Tensor, _state: &mut dyn Hasher) {}
}

enum Op {
    Leaf,
    Linear { x: Var, w: Var, b: Var },
    Relu { x: Var },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Scale { x: Var, factor: f64 },
    Sum { x: Var },
    Concat { inputs: Vec<Var>, widths: Vec<usize> },
    Gather { x: Var, idx: Vec<usize> },
    Reshape { x: Var },
    Slice { x: Var, offset: usize },
    MaxNeighbors { x: Var, argmax: Vec<u32> },
    GlobalMaxPool { x: Var, argmax: Vec<u32> },
    TileRows { x: Var },
    Custom { inputs: Vec<Var>, op: Box<dyn CustomOp> },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Linear { .. } => "linear",
            Op::Relu { .. } => "relu",
            Op::Add { .. } => "add",
            Op::Sub { .. } => "sub",
            Op::Scale { .. } => "scale",
            Op::Sum { .. } => "sum",
            Op::Concat { .. } => "concat_channels",
            Op::Gather { .. } => "gather_neighbors",
            Op::Reshape { .. } => "reshape",
            Op::Slice { .. } => "slice",
            Op::MaxNeighbors { .. } => "max_over_neighbors",
            Op::GlobalMaxPool { .. } => "global_max_pool",
            Op::TileRows { .. } => "tile_rows",
            Op::Custom { op, .. } => op.name(),
        }
    }
}

struct Node {
    value: Tensor,
    requires_grad: bool,
    op: Op,
}

/// Ordered record of a forward computation.
///
/// Every op's inputs are recorded before the op itself, so the record order
/// is a topological order and reverse replay visits each op once.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape").field("len", &self.nodes.len()).finish()
    }
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Moves a gradient out, leaving `None` behind.
    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Hash of every discrete choice made while recording: relu masks, max
    /// winners and custom-op branches. Two recordings of the same program
    /// with equal signatures evaluate the same smooth piece.
    pub fn branch_signature(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for (i, node) in self.nodes.iter().enumerate() {
            match &node.op {
                Op::Relu { x } => {
                    i.hash(&mut h);
                    for &v in self.value(*x).data() {
                        (v > 0.0).hash(&mut h);
                    }
                }
                Op::MaxNeighbors { argmax, .. } | Op::GlobalMaxPool { argmax, .. } => {
                    i.hash(&mut h);
                    argmax.hash(&mut h);
                }
                Op::Custom { op, .. } => {
                    i.hash(&mut h);
                    op.branches(&node.value, &mut h);
                }
                _ => {}
            }
        }
        h.finish()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        debug_assert!(
            value.is_finite(),
            "non-finite output from {}",
            op.name()
        );
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// A leaf that receives a gradient.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// `x[N×Cin] · w[Cin×Cout] + b[Cout]`
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (n, cin) = self.value(x).matrix_dims("linear")?;
        let (wi, cout) = self.value(w).matrix_dims("linear")?;
        let bs = self.value(b).shape();
        if wi != cin || bs != [cout] {
            return Err(dim_err(
                "linear",
                format!(
                    "x is {:?}, W is {:?}, b is {:?}",
                    self.value(x).shape(),
                    self.value(w).shape(),
                    bs
                ),
            ));
        }
        let bv = self.value(b).data();
        let mut out = Vec::with_capacity(n * cout);
        for _ in 0..n {
            out.extend_from_slice(bv);
        }
        matmul_acc(self.value(x).data(), self.value(w).data(), &mut out, n, cin, cout);
        let rg = self.any_grad(&[x, w, b]);
        Ok(self.push(Tensor::from_parts(vec![n, cout], out), Op::Linear { x, w, b }, rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let out: Vec<f64> = xv.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
        let t = Tensor::from_parts(xv.shape().to_vec(), out);
        let rg = self.nodes[x.0].requires_grad;
        self.push(t, Op::Relu { x }, rg)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(dim_err(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let (av, bv) = (self.value(a), self.value(b));
        let out = av.data().iter().zip(bv.data()).map(|(x, y)| x + y).collect();
        let t = Tensor::from_parts(av.shape().to_vec(), out);
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(t, Op::Add { a, b }, rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let (av, bv) = (self.value(a), self.value(b));
        let out = av.data().iter().zip(bv.data()).map(|(x, y)| x - y).collect();
        let t = Tensor::from_parts(av.shape().to_vec(), out);
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(t, Op::Sub { a, b }, rg))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let xv = self.value(x);
        let out = xv.data().iter().map(|v| v * factor).collect();
        let t = Tensor::from_parts(xv.shape().to_vec(), out);
        let rg = self.nodes[x.0].requires_grad;
        self.push(t, Op::Scale { x, factor }, rg)
    }

    /// Sum of all elements as a rank-0 tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let s: f64 = self.value(x).data().iter().sum();
        let rg = self.nodes[x.0].requires_grad;
        self.push(Tensor::scalar(s), Op::Sum { x }, rg)
    }

    /// Channel-wise concatenation of `N×Ci` matrices in argument order.
    pub fn concat_channels(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs
            .first()
            .ok_or_else(|| dim_err("concat_channels", "no inputs"))?;
        let (n, _) = self.value(first).matrix_dims("concat_channels")?;
        let mut widths = Vec::with_capacity(xs.len());
        for &x in xs {
            let (ni, ci) = self.value(x).matrix_dims("concat_channels")?;
            if ni != n {
                return Err(dim_err(
                    "concat_channels",
                    format!("leading extents differ: {n} vs {ni}"),
                ));
            }
            widths.push(ci);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(n * total);
        for i in 0..n {
            for (&x, &w) in xs.iter().zip(&widths) {
                out.extend_from_slice(&self.value(x).data()[i * w..(i + 1) * w]);
            }
        }
        let rg = self.any_grad(xs);
        Ok(self.push(
            Tensor::from_parts(vec![n, total], out),
            Op::Concat {
                inputs: xs.to_vec(),
                widths,
            },
            rg,
        ))
    }

    /// `out[n, j, :] = x[idx[n·k + j], :]` for a row-major `rows × k` index table.
    pub fn gather_neighbors(&mut self, x: Var, idx: &[usize], k: usize) -> Result<Var> {
        let (src, c) = self.value(x).matrix_dims("gather_neighbors")?;
        if k == 0 || idx.len() % k != 0 {
            return Err(dim_err(
                "gather_neighbors",
                format!("index table of {} entries is not a multiple of k={k}", idx.len()),
            ));
        }
        if let Some(pos) = idx.iter().position(|&i| i >= src) {
            return Err(Error::Index {
                op: "gather_neighbors",
                row: pos / k,
                slot: pos % k,
                value: idx[pos],
                len: src,
            });
        }
        let rows = idx.len() / k;
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            out.extend_from_slice(&xv[i * c..(i + 1) * c]);
        }
        let rg = self.nodes[x.0].requires_grad;
        Ok(self.push(
            Tensor::from_parts(vec![rows, k, c], out),
            Op::Gather {
                x,
                idx: idx.to_vec(),
            },
            rg,
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).reshaped(shape)?;
        let rg = self.nodes[x.0].requires_grad;
        Ok(self.push(t, Op::Reshape { x }, rg))
    }

    /// A contiguous run of the flattened values of `x`, viewed with `shape`.
    pub fn slice(&mut self, x: Var, offset: usize, shape: &[usize]) -> Result<Var> {
        let len: usize = shape.iter().product();
        let src = self.value(x).data();
        if offset + len > src.len() {
            return Err(dim_err(
                "slice",
                format!("range {offset}..{} exceeds {} values", offset + len, src.len()),
            ));
        }
        let t = Tensor::new(shape, src[offset..offset + len].to_vec())?;
        let rg = self.nodes[x.0].requires_grad;
        Ok(self.push(t, Op::Slice { x, offset }, rg))
    }

    /// Channel-wise max over the neighbor axis of an `N×k×C` tensor.
    /// Ties resolve to the lowest neighbor slot.
    pub fn max_over_neighbors(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let (n, k, c) = match xv.shape() {
            &[n, k, c] => (n, k, c),
            s => {
                return Err(dim_err(
                    "max_over_neighbors",
                    format!("expected N×k×C, got {s:?}"),
                ))
            }
        };
        if k == 0 {
            return Err(dim_err("max_over_neighbors", "k must be at least 1"));
        }
        let d = xv.data();
        let mut out = vec![0.0; n * c];
        let mut argmax = vec![0u32; n * c];
        for i in 0..n {
            let base = i * k * c;
            out[i * c..(i + 1) * c].copy_from_slice(&d[base..base + c]);
            for j in 1..k {
                let row = &d[base + j * c..base + (j + 1) * c];
                for ch in 0..c {
                    if row[ch] > out[i * c + ch] {
                        out[i * c + ch] = row[ch];
                        argmax[i * c + ch] = j as u32;
                    }
                }
            }
        }
        let rg = self.nodes[x.0].requires_grad;
        Ok(self.push(
            Tensor::from_parts(vec![n, c], out),
            Op::MaxNeighbors { x, argmax },
            rg,
        ))
    }

    /// Channel-wise max over all rows, as a `1×C` row. Ties resolve to the lowest row.
    pub fn global_max_pool(&mut self, x: Var) -> Result<Var> {
        let (n, c) = self.value(x).matrix_dims("global_max_pool")?;
        if n == 0 {
            return Err(dim_err("global_max_pool", "needs at least one row"));
        }
        let d = self.value(x).data();
        let mut out = d[..c].to_vec();
        let mut argmax = vec![0u32; c];
        for i in 1..n {
            for ch in 0..c {
                let v = d[i * c + ch];
                if v > out[ch] {
                    out[ch] = v;
                    argmax[ch] = i as u32;
                }
            }
        }
        let rg = self.nodes[x.0].requires_grad;
        Ok(self.push(
            Tensor::from_parts(vec![1, c], out),
            Op::GlobalMaxPool { x, argmax },
            rg,
        ))
    }

    /// Repeats a `1×C` row `n` times.
    pub fn tile_rows(&mut self, x: Var, n: usize) -> Result<Var> {
        let (r, c) = self.value(x).matrix_dims("tile_rows")?;
        if r != 1 {
            return Err(dim_err("tile_rows", format!("expected one row, got {r}")));
        }
        let row = self.value(x).data();
        let mut out = Vec::with_capacity(n * c);
        for _ in 0..n {
            out.extend_from_slice(row);
        }
        let rg = self.nodes[x.0].requires_grad;
        Ok(self.push(Tensor::from_parts(vec![n, c], out), Op::TileRows { x }, rg))
    }

    /// Rearranges `N×(r·C)` into `(r·N)×C`: output row `i·r + s` holds
    /// channels `[s·C, (s+1)·C)` of input row `i`.
    pub fn periodic_shuffle(&mut self, x: Var, r: usize) -> Result<Var> {
        let shape = shuffle_shape(self.value(x).shape(), r)?;
        self.reshape(x, &shape)
    }

    /// Inverse of [`Tape::periodic_shuffle`]: `(r·N)×C` back to `N×(r·C)`.
    pub fn inverse_shuffle(&mut self, x: Var, r: usize) -> Result<Var> {
        let shape = inverse_shuffle_shape(self.value(x).shape(), r)?;
        self.reshape(x, &shape)
    }

    /// Records the result of a [`CustomOp`] computed by the caller.
    pub fn custom(&mut self, inputs: &[Var], output: Tensor, op: Box<dyn CustomOp>) -> Var {
        let rg = self.any_grad(inputs);
        self.push(
            output,
            Op::Custom {
                inputs: inputs.to_vec(),
                op,
            },
            rg,
        )
    }

    /// Reverse-mode sweep from a scalar `loss`.
    ///
    /// Every leaf created with [`Tape::leaf`] gets a gradient; leaves the loss
    /// does not depend on get an all-zero one.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(lv.shape(), 1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
        }

        for (i, node) in self.nodes.iter().enumerate() {
            if matches!(node.op, Op::Leaf) && node.requires_grad && grads[i].is_none() {
                grads[i] = Some(Tensor::zeros(node.value.shape()));
            }
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let needs = |v: Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Leaf => {}
            Op::Linear { x, w, b } => {
                let (n, cin) = (self.value(*x).rows(), self.value(*x).cols());
                let cout = node.value.cols();
                if needs(*x) {
                    let mut gx = vec![0.0; n * cin];
                    matmul_bt_acc(g.data(), self.value(*w).data(), &mut gx, n, cin, cout);
                    accumulate(grads, *x, Tensor::from_parts(vec![n, cin], gx));
                }
                if needs(*w) {
                    let mut gw = vec![0.0; cin * cout];
                    matmul_at_acc(self.value(*x).data(), g.data(), &mut gw, n, cin, cout);
                    accumulate(grads, *w, Tensor::from_parts(vec![cin, cout], gw));
                }
                if needs(*b) {
                    let mut gb = vec![0.0; cout];
                    col_sum_acc(g.data(), &mut gb, n, cout);
                    accumulate(grads, *b, Tensor::from_parts(vec![cout], gb));
                }
            }
            Op::Relu { x } => {
                let gx = g
                    .data()
                    .iter()
                    .zip(node.value.data())
                    .map(|(&gv, &o)| if o > 0.0 { gv } else { 0.0 })
                    .collect();
                accumulate(grads, *x, Tensor::from_parts(g.shape().to_vec(), gx));
            }
            Op::Add { a, b } => {
                if needs(*a) {
                    accumulate(grads, *a, g.clone());
                }
                if needs(*b) {
                    accumulate(grads, *b, g.clone());
                }
            }
            Op::Sub { a, b } => {
                if needs(*a) {
                    accumulate(grads, *a, g.clone());
                }
                if needs(*b) {
                    let neg = g.data().iter().map(|v| -v).collect();
                    accumulate(grads, *b, Tensor::from_parts(g.shape().to_vec(), neg));
                }
            }
            Op::Scale { x, factor } => {
                let gx = g.data().iter().map(|v| v * factor).collect();
                accumulate(grads, *x, Tensor::from_parts(g.shape().to_vec(), gx));
            }
            Op::Sum { x } => {
                let gv = g.data()[0];
                accumulate(grads, *x, Tensor::filled(self.value(*x).shape(), gv));
            }
            Op::Concat { inputs, widths } => {
                let n = node.value.rows();
                let total = node.value.cols();
                let mut offset = 0;
                for (&x, &w) in inputs.iter().zip(widths) {
                    if needs(x) {
                        let mut gx = Vec::with_capacity(n * w);
                        for i in 0..n {
                            let start = i * total + offset;
                            gx.extend_from_slice(&g.data()[start..start + w]);
                        }
                        accumulate(grads, x, Tensor::from_parts(vec![n, w], gx));
                    }
                    offset += w;
                }
            }
            Op::Gather { x, idx } => {
                let xs = self.value(*x).shape().to_vec();
                let c = xs[1];
                let mut gx = vec![0.0; xs[0] * c];
                for (slot, &src) in idx.iter().enumerate() {
                    let gr = &g.data()[slot * c..(slot + 1) * c];
                    for (o, &v) in gx[src * c..(src + 1) * c].iter_mut().zip(gr) {
                        *o += v;
                    }
                }
                accumulate(grads, *x, Tensor::from_parts(xs, gx));
            }
            Op::Reshape { x } => {
                let gx = Tensor::from_parts(self.value(*x).shape().to_vec(), g.data().to_vec());
                accumulate(grads, *x, gx);
            }
            Op::Slice { x, offset } => {
                let xs = self.value(*x).shape().to_vec();
                let mut gx = vec![0.0; self.value(*x).len()];
                gx[*offset..*offset + g.len()].copy_from_slice(g.data());
                accumulate(grads, *x, Tensor::from_parts(xs, gx));
            }
            Op::MaxNeighbors { x, argmax } => {
                let xs = self.value(*x).shape().to_vec();
                let (k, c) = (xs[1], xs[2]);
                let mut gx = vec![0.0; self.value(*x).len()];
                for (pos, (&j, &gv)) in argmax.iter().zip(g.data()).enumerate() {
                    let (i, ch) = (pos / c, pos % c);
                    gx[(i * k + j as usize) * c + ch] += gv;
                }
                accumulate(grads, *x, Tensor::from_parts(xs, gx));
            }
            Op::GlobalMaxPool { x, argmax } => {
                let xs = self.value(*x).shape().to_vec();
                let c = xs[1];
                let mut gx = vec![0.0; self.value(*x).len()];
                for (ch, (&row, &gv)) in argmax.iter().zip(g.data()).enumerate() {
                    gx[row as usize * c + ch] += gv;
                }
                accumulate(grads, *x, Tensor::from_parts(xs, gx));
            }
            Op::TileRows { x } => {
                let (n, c) = (node.value.rows(), node.value.cols());
                let mut gx = vec![0.0; c];
                col_sum_acc(g.data(), &mut gx, n, c);
                accumulate(grads, *x, Tensor::from_parts(vec![1, c], gx));
            }
            Op::Custom { inputs, op } => {
                let values: Vec<&Tensor> = inputs.iter().map(|v| self.value(*v)).collect();
                let flags: Vec<bool> = inputs.iter().map(|v| needs(*v)).collect();
                let out = op.backward(&values, &node.value, g, &flags);
                for ((&v, gx), &need) in inputs.iter().zip(out).zip(&flags) {
                    if let (true, Some(gx)) = (need, gx) {
                        debug_assert_eq!(gx.shape(), self.value(v).shape(), "{}", op.name());
                        accumulate(grads, v, gx);
                    }
                }
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

pub(crate) fn shuffle_shape(shape: &[usize], r: usize) -> Result<Vec<usize>> {
    match shape {
        &[n, rc] if r > 0 && rc % r == 0 => Ok(vec![n * r, rc / r]),
        s => Err(dim_err(
            "periodic_shuffle",
            format!("shape {s:?} cannot be split into r={r} channel groups"),
        )),
    }
}

pub(crate) fn inverse_shuffle_shape(shape: &[usize], r: usize) -> Result<Vec<usize>> {
    match shape {
        &[rn, c] if r > 0 && rn % r == 0 => Ok(vec![rn / r, c * r]),
        s => Err(dim_err(
            "inverse_shuffle",
            format!("shape {s:?} has a row count not divisible by r={r}"),
        )),
    }
}
