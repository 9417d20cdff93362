//! Reverse-mode differentiation over a recorded list of operations.
//!
//! Every forward operation appends a node holding its value and enough saved
//! state to replay the chain rule. [`Graph::backward`] walks the record in
//! reverse and fills each node's gradient slot.

use std::collections::HashMap;

use super::{ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Norms below this are clamped in cosine similarity and treated as zero
/// elsewhere.
pub const EPS_NORM: f64 = 1e-12;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Softmax(Var),
    Cosine {
        a: Var,
        b: Var,
        a_unit: Vec<f64>,
        b_unit: Vec<f64>,
        a_norm: Vec<f64>,
        b_norm: Vec<f64>,
    },
    RowNorm(Var),
    RowDist(Var, Var),
    RowSum(Var),
    Sum(Var),
    Mean(Var),
    ConcatCols(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    SegmentMax { x: Var, argmax: Vec<usize> },
    SegmentMean { x: Var, ids: Vec<usize>, counts: Vec<usize> },
    Pick(Var, Vec<usize>),
    Squash { x: Var, norms: Vec<f64> },
    Focal { p: Var, labels: Vec<usize>, gamma: f64 },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// A computation record. Build values with the operation methods, then call
/// [`Graph::backward`] on a scalar.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    bindings: HashMap<ParamId, Var>,
}

fn shape_err(op: &'static str, lhs: (usize, usize), rhs: (usize, usize)) -> Error {
    Error::Shape { op, lhs, rhs }
}

// out[P×N] += a[P×K] · b[K×N]
fn gemm_nn(a: &[f64], b: &[f64], out: &mut [f64], p: usize, k: usize, n: usize) {
    for i in 0..p {
        let orow = &mut out[i * n..(i + 1) * n];
        for (kk, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b[kk * n..(kk + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

// out[P×K] += g[P×N] · b[K×N]ᵀ
fn gemm_nt(g: &[f64], b: &[f64], out: &mut [f64], p: usize, k: usize, n: usize) {
    for i in 0..p {
        let grow = &g[i * n..(i + 1) * n];
        let orow = &mut out[i * k..(i + 1) * k];
        for (kk, o) in orow.iter_mut().enumerate() {
            let brow = &b[kk * n..(kk + 1) * n];
            *o += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
        }
    }
}

// out[K×N] += a[P×K]ᵀ · g[P×N]
fn gemm_tn(a: &[f64], g: &[f64], out: &mut [f64], p: usize, k: usize, n: usize) {
    for i in 0..p {
        let grow = &g[i * n..(i + 1) * n];
        for (kk, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[kk * n..(kk + 1) * n];
            for (o, gv) in orow.iter_mut().zip(grow) {
                *o += av * gv;
            }
        }
    }
}

fn normalize_rows(x: &Tensor, eps: f64) -> (Vec<f64>, Vec<f64>, usize) {
    let (r, c) = x.shape();
    let mut unit = vec![0.0; r * c];
    let mut norms = vec![0.0; r];
    let mut clamped = 0;
    for i in 0..r {
        let row = x.row(i);
        let mut n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n < eps {
            n = eps;
            clamped += 1;
        }
        norms[i] = n;
        for (u, v) in unit[i * c..(i + 1) * c].iter_mut().zip(row) {
            *u = v / n;
        }
    }
    (unit, norms, clamped)
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// Gradient of the last `backward` target with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].value.grad()
    }

    /// A constant input. Gradients are still computed for it.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    /// Binds a parameter into the graph. Binding the same parameter twice
    /// returns the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(v) = self.bindings.get(&id) {
            return *v;
        }
        let mut t = store.get(id).tensor.clone();
        t.clear_grad();
        let v = self.push(t, Op::Leaf);
        self.bindings.insert(id, v);
        v
    }

    pub fn bound_params(&self) -> impl Iterator<Item = (ParamId, Var)> + '_ {
        self.bindings.iter().map(|(p, v)| (*p, *v))
    }

    /// Adds `scale ×` the gradient of every bound parameter into the store.
    pub fn accumulate_into(&self, store: &mut ParamStore, scale: f64) {
        for (id, v) in &self.bindings {
            if let Some(g) = self.grad(*v) {
                store.get_mut(*id).tensor.accumulate_grad(g, scale);
            }
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (p, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        if k != k2 {
            return Err(shape_err("matmul", (p, k), (k2, n)));
        }
        let mut out = vec![0.0; p * n];
        gemm_nn(self.value(a).data(), self.value(b).data(), &mut out, p, k, n);
        Ok(self.push(Tensor::new(p, n, out)?, Op::MatMul(a, b)))
    }

    /// `x` plus the 1×D row `b` broadcast over every row.
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var> {
        let (p, d) = self.shape(x);
        let bs = self.shape(b);
        if bs != (1, d) {
            return Err(shape_err("add_row", (p, d), bs));
        }
        let mut out = self.value(x).clone();
        out.clear_grad();
        let brow = self.value(b).data().to_vec();
        for i in 0..p {
            for (o, bv) in out.row_mut(i).iter_mut().zip(&brow) {
                *o += bv;
            }
        }
        Ok(self.push(out, Op::AddRow(x, b)))
    }

    /// `x · w + b`, the per-point fully connected layer.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        self.add_row(xw, b)
    }

    fn zip_op(&mut self, a: Var, b: Var, name: &'static str, f: fn(f64, f64) -> f64) -> Result<Tensor> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa != sb {
            return Err(shape_err(name, sa, sb));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| f(*x, *y))
            .collect();
        Tensor::new(sa.0, sa.1, data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_op(a, b, "add", |x, y| x + y)?;
        Ok(self.push(t, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_op(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(t, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_op(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(t, Op::Mul(a, b)))
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.mul(x, x).expect("same node has one shape")
    }

    fn map(&self, x: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let v = self.value(x);
        let data = v.data().iter().map(|a| f(*a)).collect();
        Tensor::new(v.rows(), v.cols(), data).expect("shape preserved")
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let t = self.map(x, |a| a * s);
        self.push(t, Op::Scale(x, s))
    }

    pub fn add_scalar(&mut self, x: Var, s: f64) -> Var {
        let t = self.map(x, |a| a + s);
        self.push(t, Op::AddScalar(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let t = self.map(x, |a| a.max(0.0));
        self.push(t, Op::Relu(x))
    }

    /// Numerically stable softmax of each row.
    pub fn row_softmax(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let (r, c) = v.shape();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = v.row(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let o = &mut out[i * c..(i + 1) * c];
            let mut sum = 0.0;
            for (oj, xj) in o.iter_mut().zip(row) {
                *oj = (xj - max).exp();
                sum += *oj;
            }
            for oj in o.iter_mut() {
                *oj /= sum;
            }
        }
        let t = Tensor::new(r, c, out).expect("shape preserved");
        self.push(t, Op::Softmax(x))
    }

    /// Pairwise cosine similarity between the rows of `a` (P×D) and `b` (N×D).
    pub fn cosine_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let (p, d) = self.shape(a);
        let (n, d2) = self.shape(b);
        if d != d2 {
            return Err(shape_err("cosine_rows", (p, d), (n, d2)));
        }
        let (a_unit, a_norm, ca) = normalize_rows(self.value(a), EPS_NORM);
        let (b_unit, b_norm, cb) = normalize_rows(self.value(b), EPS_NORM);
        if ca + cb > 0 {
            log::debug!("cosine_rows: clamped {} near-zero row norms", ca + cb);
        }
        let mut out = vec![0.0; p * n];
        gemm_nt(&a_unit, &b_unit, &mut out, p, n, d);
        Ok(self.push(
            Tensor::new(p, n, out)?,
            Op::Cosine {
                a,
                b,
                a_unit,
                b_unit,
                a_norm,
                b_norm,
            },
        ))
    }

    /// Euclidean norm of every row, as a P×1 column.
    pub fn row_norm(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let data = (0..v.rows())
            .map(|i| v.row(i).iter().map(|a| a * a).sum::<f64>().sqrt())
            .collect();
        let t = Tensor::new(v.rows(), 1, data).expect("column");
        self.push(t, Op::RowNorm(x))
    }

    /// Euclidean distances between every row of `a` (P×D) and of `b` (N×D).
    pub fn row_dist(&mut self, a: Var, b: Var) -> Result<Var> {
        let (p, d) = self.shape(a);
        let (n, d2) = self.shape(b);
        if d != d2 {
            return Err(shape_err("row_dist", (p, d), (n, d2)));
        }
        let av = self.value(a);
        let bv = self.value(b);
        let mut out = vec![0.0; p * n];
        for i in 0..p {
            let ai = av.row(i);
            for j in 0..n {
                out[i * n + j] = ai
                    .iter()
                    .zip(bv.row(j))
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt();
            }
        }
        Ok(self.push(Tensor::new(p, n, out)?, Op::RowDist(a, b)))
    }

    pub fn row_sum(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let data = (0..v.rows()).map(|i| v.row(i).iter().sum()).collect();
        let t = Tensor::new(v.rows(), 1, data).expect("column");
        self.push(t, Op::RowSum(x))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    /// Mean over all entries. An empty tensor has mean 0.
    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let m = if v.is_empty() {
            0.0
        } else {
            v.data().iter().sum::<f64>() / v.len() as f64
        };
        self.push(Tensor::scalar(m), Op::Mean(x))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts
            .first()
            .map(|v| self.shape(*v).0)
            .ok_or_else(|| Error::usage("concat_cols of nothing"))?;
        for v in parts {
            let s = self.shape(*v);
            if s.0 != rows {
                return Err(shape_err("concat_cols", (rows, 0), s));
            }
        }
        let cols: usize = parts.iter().map(|v| self.shape(*v).1).sum();
        let mut out = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for v in parts {
                out.extend_from_slice(self.value(*v).row(i));
            }
        }
        Ok(self.push(Tensor::new(rows, cols, out)?, Op::ConcatCols(parts.to_vec())))
    }

    /// Row `i` of the output is row `idx[i]` of `x`.
    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let (r, c) = self.shape(x);
        if let Some(&bad) = idx.iter().find(|&&i| i >= r) {
            return Err(shape_err("gather_rows", (r, c), (bad, 0)));
        }
        let t = self.value(x).select_rows(idx);
        Ok(self.push(t, Op::GatherRows(x, idx.to_vec())))
    }

    /// Column-wise max over the rows sharing a group id; output has
    /// `groups` rows. Ties resolve to the first row. Empty groups yield zeros.
    pub fn segment_max(&mut self, x: Var, ids: &[usize], groups: usize) -> Result<Var> {
        let (r, c) = self.shape(x);
        if ids.len() != r {
            return Err(shape_err("segment_max", (r, c), (ids.len(), 1)));
        }
        if ids.iter().any(|&g| g >= groups) {
            return Err(Error::usage("segment_max: group id out of range"));
        }
        let v = self.value(x);
        let mut argmax = vec![usize::MAX; groups * c];
        for (i, &g) in ids.iter().enumerate() {
            let row = v.row(i);
            for j in 0..c {
                let slot = &mut argmax[g * c + j];
                if *slot == usize::MAX || row[j] > v.get(*slot, j) {
                    *slot = i;
                }
            }
        }
        let out = argmax
            .iter()
            .enumerate()
            .map(|(k, &i)| if i == usize::MAX { 0.0 } else { v.get(i, k % c) })
            .collect();
        let t = Tensor::new(groups, c, out)?;
        Ok(self.push(t, Op::SegmentMax { x, argmax }))
    }

    /// Mean of the rows sharing a group id. Empty groups yield zeros.
    pub fn segment_mean(&mut self, x: Var, ids: &[usize], groups: usize) -> Result<Var> {
        let (r, c) = self.shape(x);
        if ids.len() != r {
            return Err(shape_err("segment_mean", (r, c), (ids.len(), 1)));
        }
        if ids.iter().any(|&g| g >= groups) {
            return Err(Error::usage("segment_mean: group id out of range"));
        }
        let v = self.value(x);
        let mut counts = vec![0usize; groups];
        let mut out = vec![0.0; groups * c];
        for (i, &g) in ids.iter().enumerate() {
            counts[g] += 1;
            for (o, a) in out[g * c..(g + 1) * c].iter_mut().zip(v.row(i)) {
                *o += a;
            }
        }
        for g in 0..groups {
            if counts[g] > 0 {
                let inv = 1.0 / counts[g] as f64;
                out[g * c..(g + 1) * c].iter_mut().for_each(|o| *o *= inv);
            }
        }
        let t = Tensor::new(groups, c, out)?;
        Ok(self.push(
            t,
            Op::SegmentMean {
                x,
                ids: ids.to_vec(),
                counts,
            },
        ))
    }

    /// Picks `x[i, idx[i]]` from every row, giving a P×1 column.
    pub fn pick(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let (r, c) = self.shape(x);
        if idx.len() != r || idx.iter().any(|&j| j >= c) {
            return Err(shape_err("pick", (r, c), (idx.len(), 1)));
        }
        let v = self.value(x);
        let data = idx.iter().enumerate().map(|(i, &j)| v.get(i, j)).collect();
        let t = Tensor::new(r, 1, data)?;
        Ok(self.push(t, Op::Pick(x, idx.to_vec())))
    }

    /// Length-dampening squash of each row: `v · ‖v‖ / (1 + ‖v‖²)`, which is
    /// `(‖v‖²/(1+‖v‖²)) · v/‖v‖`. Rows with norm below [`EPS_NORM`] map to 0.
    pub fn squash(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let (r, c) = v.shape();
        let mut out = vec![0.0; r * c];
        let mut norms = vec![0.0; r];
        for i in 0..r {
            let row = v.row(i);
            let n = row.iter().map(|a| a * a).sum::<f64>().sqrt();
            norms[i] = n;
            if n < EPS_NORM {
                continue;
            }
            let f = n / (1.0 + n * n);
            for (o, a) in out[i * c..(i + 1) * c].iter_mut().zip(row) {
                *o = a * f;
            }
        }
        let t = Tensor::new(r, c, out).expect("shape preserved");
        self.push(t, Op::Squash { x, norms })
    }

    /// Mean focal loss `-(1 - p_y)^γ · ln p_y` over rows of a probability
    /// matrix; `p_y` is clamped to at least 1e-12 inside the log. `γ = 0`
    /// is cross-entropy.
    pub fn focal(&mut self, p: Var, labels: &[usize], gamma: f64) -> Result<Var> {
        let (r, c) = self.shape(p);
        if labels.len() != r {
            return Err(shape_err("focal", (r, c), (labels.len(), 1)));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
            return Err(Error::usage(format!("focal: label {bad} out of range for {c} classes")));
        }
        let v = self.value(p);
        let mut total = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            total += focal_term(v.get(i, y), gamma);
        }
        let loss = if r == 0 { 0.0 } else { total / r as f64 };
        Ok(self.push(
            Tensor::scalar(loss),
            Op::Focal {
                p,
                labels: labels.to_vec(),
                gamma,
            },
        ))
    }

    /// Runs reverse-mode accumulation from the scalar `target`, filling the
    /// gradient slot of every node that influences it.
    pub fn backward(&mut self, target: Var) -> Result<()> {
        let s = self.shape(target);
        if s != (1, 1) {
            return Err(shape_err("backward (scalar target)", s, (1, 1)));
        }
        for node in &mut self.nodes {
            node.value.clear_grad();
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[target.0] = Some(vec![1.0]);
        for idx in (0..=target.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            self.nodes[idx].value.set_grad(g);
        }
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let out = &node.value;
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            let n = self.nodes[v.0].value.len();
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; n]);
            f(slot);
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (p, k) = self.shape(*a);
                let n = self.shape(*b).1;
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                acc(*a, &mut |ga| gemm_nt(g, bv, ga, p, k, n));
                acc(*b, &mut |gb| gemm_tn(av, g, gb, p, k, n));
            }
            Op::AddRow(x, b) => {
                let d = out.cols();
                acc(*x, &mut |gx| gx.iter_mut().zip(g).for_each(|(a, b)| *a += b));
                acc(*b, &mut |gb| {
                    for row in g.chunks(d) {
                        gb.iter_mut().zip(row).for_each(|(a, b)| *a += b);
                    }
                });
            }
            Op::Add(a, b) => {
                acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(x, y)| *x += y));
                acc(*b, &mut |gb| gb.iter_mut().zip(g).for_each(|(x, y)| *x += y));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(x, y)| *x += y));
                acc(*b, &mut |gb| gb.iter_mut().zip(g).for_each(|(x, y)| *x -= y));
            }
            Op::Mul(a, b) => {
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                acc(*a, &mut |ga| {
                    for i in 0..ga.len() {
                        ga[i] += g[i] * bv[i];
                    }
                });
                acc(*b, &mut |gb| {
                    for i in 0..gb.len() {
                        gb[i] += g[i] * av[i];
                    }
                });
            }
            Op::Scale(x, s) => {
                acc(*x, &mut |gx| gx.iter_mut().zip(g).for_each(|(a, b)| *a += s * b));
            }
            Op::AddScalar(x) => {
                acc(*x, &mut |gx| gx.iter_mut().zip(g).for_each(|(a, b)| *a += b));
            }
            Op::Relu(x) => {
                let xv = self.value(*x).data();
                acc(*x, &mut |gx| {
                    for i in 0..gx.len() {
                        if xv[i] > 0.0 {
                            gx[i] += g[i];
                        }
                    }
                });
            }
            Op::Softmax(x) => {
                let c = out.cols();
                let y = out.data();
                acc(*x, &mut |gx| {
                    for (i, grow) in g.chunks(c).enumerate() {
                        let yrow = &y[i * c..(i + 1) * c];
                        let dot: f64 = grow.iter().zip(yrow).map(|(a, b)| a * b).sum();
                        for j in 0..c {
                            gx[i * c + j] += yrow[j] * (grow[j] - dot);
                        }
                    }
                });
            }
            Op::Cosine {
                a,
                b,
                a_unit,
                b_unit,
                a_norm,
                b_norm,
            } => {
                let (p, d) = self.shape(*a);
                let n = self.shape(*b).0;
                // d/d(unit a) = G · unit_b, then project out the radial part.
                let mut du = vec![0.0; p * d];
                gemm_nn(g, b_unit, &mut du, p, n, d);
                acc(*a, &mut |ga| {
                    for i in 0..p {
                        let u = &a_unit[i * d..(i + 1) * d];
                        let dui = &du[i * d..(i + 1) * d];
                        let radial: f64 = dui.iter().zip(u).map(|(x, y)| x * y).sum();
                        for k in 0..d {
                            ga[i * d + k] += (dui[k] - radial * u[k]) / a_norm[i];
                        }
                    }
                });
                let mut dv = vec![0.0; n * d];
                gemm_tn(g, a_unit, &mut dv, p, n, d);
                acc(*b, &mut |gb| {
                    for j in 0..n {
                        let u = &b_unit[j * d..(j + 1) * d];
                        let dvj = &dv[j * d..(j + 1) * d];
                        let radial: f64 = dvj.iter().zip(u).map(|(x, y)| x * y).sum();
                        for k in 0..d {
                            gb[j * d + k] += (dvj[k] - radial * u[k]) / b_norm[j];
                        }
                    }
                });
            }
            Op::RowNorm(x) => {
                let xv = self.value(*x);
                let c = xv.cols();
                let norms = out.data();
                acc(*x, &mut |gx| {
                    for i in 0..norms.len() {
                        if norms[i] < EPS_NORM {
                            continue;
                        }
                        let s = g[i] / norms[i];
                        for k in 0..c {
                            gx[i * c + k] += s * xv.get(i, k);
                        }
                    }
                });
            }
            Op::RowDist(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                let (p, d) = av.shape();
                let n = bv.rows();
                let dist = out.data();
                let mut ga_local = vec![0.0; p * d];
                let mut gb_local = vec![0.0; n * d];
                for i in 0..p {
                    for j in 0..n {
                        let dd = dist[i * n + j];
                        if dd < EPS_NORM {
                            continue;
                        }
                        let s = g[i * n + j] / dd;
                        if s == 0.0 {
                            continue;
                        }
                        for k in 0..d {
                            let diff = s * (av.get(i, k) - bv.get(j, k));
                            ga_local[i * d + k] += diff;
                            gb_local[j * d + k] -= diff;
                        }
                    }
                }
                acc(*a, &mut |ga| ga.iter_mut().zip(&ga_local).for_each(|(x, y)| *x += y));
                acc(*b, &mut |gb| gb.iter_mut().zip(&gb_local).for_each(|(x, y)| *x += y));
            }
            Op::RowSum(x) => {
                let c = self.shape(*x).1;
                acc(*x, &mut |gx| {
                    for (i, row) in gx.chunks_mut(c).enumerate() {
                        row.iter_mut().for_each(|a| *a += g[i]);
                    }
                });
            }
            Op::Sum(x) => {
                acc(*x, &mut |gx| gx.iter_mut().for_each(|a| *a += g[0]));
            }
            Op::Mean(x) => {
                let n = self.value(*x).len().max(1) as f64;
                acc(*x, &mut |gx| gx.iter_mut().for_each(|a| *a += g[0] / n));
            }
            Op::ConcatCols(parts) => {
                let total = out.cols();
                let mut offset = 0;
                for v in parts {
                    let c = self.shape(*v).1;
                    acc(*v, &mut |gv| {
                        for (i, row) in gv.chunks_mut(c).enumerate() {
                            let src = &g[i * total + offset..i * total + offset + c];
                            row.iter_mut().zip(src).for_each(|(a, b)| *a += b);
                        }
                    });
                    offset += c;
                }
            }
            Op::GatherRows(x, idx) => {
                let c = out.cols();
                acc(*x, &mut |gx| {
                    for (i, &src) in idx.iter().enumerate() {
                        for k in 0..c {
                            gx[src * c + k] += g[i * c + k];
                        }
                    }
                });
            }
            Op::SegmentMax { x, argmax } => {
                let c = out.cols();
                acc(*x, &mut |gx| {
                    for (slot, &i) in argmax.iter().enumerate() {
                        if i != usize::MAX {
                            gx[i * c + slot % c] += g[slot];
                        }
                    }
                });
            }
            Op::SegmentMean { x, ids, counts } => {
                let c = out.cols();
                acc(*x, &mut |gx| {
                    for (i, &grp) in ids.iter().enumerate() {
                        let inv = 1.0 / counts[grp] as f64;
                        for k in 0..c {
                            gx[i * c + k] += g[grp * c + k] * inv;
                        }
                    }
                });
            }
            Op::Pick(x, idx) => {
                let c = self.shape(*x).1;
                acc(*x, &mut |gx| {
                    for (i, &j) in idx.iter().enumerate() {
                        gx[i * c + j] += g[i];
                    }
                });
            }
            Op::Squash { x, norms } => {
                let xv = self.value(*x);
                let c = xv.cols();
                acc(*x, &mut |gx| {
                    for (i, &n) in norms.iter().enumerate() {
                        if n < EPS_NORM {
                            continue;
                        }
                        let row = xv.row(i);
                        let grow = &g[i * c..(i + 1) * c];
                        let f = n / (1.0 + n * n);
                        // d f / d n, divided by n for the v vᵀ term.
                        let df = (1.0 - n * n) / ((1.0 + n * n) * (1.0 + n * n));
                        let proj: f64 = grow.iter().zip(row).map(|(a, b)| a * b).sum();
                        for k in 0..c {
                            gx[i * c + k] += f * grow[k] + df * proj * row[k] / n;
                        }
                    }
                });
            }
            Op::Focal { p, labels, gamma } => {
                let pv = self.value(*p);
                let c = pv.cols();
                let r = labels.len().max(1) as f64;
                acc(*p, &mut |gp| {
                    for (i, &y) in labels.iter().enumerate() {
                        gp[i * c + y] += g[0] * focal_derivative(pv.get(i, y), *gamma) / r;
                    }
                });
            }
        }
    }
}

const FOCAL_CLAMP: f64 = 1e-12;

pub(crate) fn focal_term(p: f64, gamma: f64) -> f64 {
    let q = p.max(FOCAL_CLAMP);
    let w = if gamma == 0.0 { 1.0 } else { (1.0 - p).max(0.0).powf(gamma) };
    -w * q.ln()
}

fn focal_derivative(p: f64, gamma: f64) -> f64 {
    let q = p.max(FOCAL_CLAMP);
    let one_minus = (1.0 - p).max(0.0);
    let weight_term = if gamma == 0.0 || one_minus == 0.0 {
        0.0
    } else {
        gamma * one_minus.powf(gamma - 1.0) * q.ln()
    };
    let log_term = if p > FOCAL_CLAMP {
        let w = if gamma == 0.0 { 1.0 } else { one_minus.powf(gamma) };
        w / p
    } else {
        0.0
    };
    weight_term - log_term
}
