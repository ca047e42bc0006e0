use std::collections::HashMap;
use std::sync::Arc;

use super::params::{ParamId, ParamStore};
use super::tensor::{gemm, Tensor};
use crate::error::{shape_err, Error, Result};

const LN_EPS: f64 = 1e-5;
const GELU_A: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_B: f64 = 0.044_715;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    ScaleBy(Var, Var),
    Recip(Var),
    Concat(Vec<Var>),
    SliceCols(Var, usize),
    GatherRows(Var, Arc<[usize]>),
    ScatterAddRows(Var, Arc<[usize]>),
    RowSoftmax(Var),
    LayerNorm { x: Var, inv_std: Vec<f64> },
    Relu(Var),
    Gelu(Var),
    RowNorm(Var),
    Mse(Var, Var),
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

/// Activation applied between MLP layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Gelu,
}

/// Reverse-mode recording of a computation over rank-2 tensors.
///
/// A tape is built fresh for each forward pass. Parameters enter through
/// [`Tape::param`], which records each [`ParamId`] at most once so that
/// repeated use across rollout steps accumulates into a single gradient.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
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

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let t = &self.nodes[v.0].value;
        (t.rows(), t.cols())
    }

    /// Leaf that does not take part in differentiation.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Leaf whose gradient is kept after [`Tape::backward`].
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(store.value(id).clone(), Op::Param, true);
        self.params.insert(id, v);
        v
    }

    /// Gradient held by a leaf or parameter after `backward`.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    /// Gradients of every parameter that was recorded on this tape.
    pub fn param_grads(&self) -> impl Iterator<Item = (ParamId, &[f64])> {
        self.params
            .iter()
            .filter_map(|(&id, &v)| self.nodes[v.0].grad.as_deref().map(|g| (id, g)))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        if k != k2 {
            return Err(shape_err("matmul", format!("{m}x{k} · {k2}x{n}")));
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.value(a).data(),
            k as isize,
            1,
            self.value(b).data(),
            n as isize,
            1,
            0.0,
            &mut out,
        );
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::from_rows(m, n, out)?, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let (m, n) = self.shape(a);
        let src = self.value(a).data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = src[i * n + j];
            }
        }
        let rg = self.rg(a);
        self.push(Tensor::from_rows(n, m, out).unwrap(), Op::Transpose(a), rg)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(op, format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        Ok(())
    }

    fn zip(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, tag: Op) -> Result<Var> {
        self.same_shape(op, a, b)?;
        let (m, n) = self.shape(a);
        let out: Vec<f64> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::from_rows(m, n, out)?, tag, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// `x + row`, broadcasting a `1×c` row over every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (m, n) = self.shape(x);
        if self.shape(row) != (1, n) {
            return Err(shape_err("add_row", format!("{m}x{n} + {:?}", self.shape(row))));
        }
        let r = self.value(row).data();
        let out: Vec<f64> = self
            .value(x)
            .data()
            .chunks(n)
            .flat_map(|xr| xr.iter().zip(r).map(|(a, b)| a + b))
            .collect();
        let rg = self.rg(x) || self.rg(row);
        Ok(self.push(Tensor::from_rows(m, n, out)?, Op::AddRow(x, row), rg))
    }

    /// `x ⊙ row`, broadcasting a `1×c` row.
    pub fn mul_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (m, n) = self.shape(x);
        if self.shape(row) != (1, n) {
            return Err(shape_err("mul_row", format!("{m}x{n} * {:?}", self.shape(row))));
        }
        let r = self.value(row).data();
        let out: Vec<f64> = self
            .value(x)
            .data()
            .chunks(n)
            .flat_map(|xr| xr.iter().zip(r).map(|(a, b)| a * b))
            .collect();
        let rg = self.rg(x) || self.rg(row);
        Ok(self.push(Tensor::from_rows(m, n, out)?, Op::MulRow(x, row), rg))
    }

    /// `x ⊙ col`, broadcasting an `r×1` column.
    pub fn mul_col(&mut self, x: Var, col: Var) -> Result<Var> {
        let (m, n) = self.shape(x);
        if self.shape(col) != (m, 1) {
            return Err(shape_err("mul_col", format!("{m}x{n} * {:?}", self.shape(col))));
        }
        let c = self.value(col).data();
        let out: Vec<f64> = self
            .value(x)
            .data()
            .chunks(n)
            .zip(c)
            .flat_map(|(xr, &s)| xr.iter().map(move |a| a * s))
            .collect();
        let rg = self.rg(x) || self.rg(col);
        Ok(self.push(Tensor::from_rows(m, n, out)?, Op::MulCol(x, col), rg))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let (m, n) = self.shape(x);
        let out: Vec<f64> = self.value(x).data().iter().map(|a| a * s).collect();
        let rg = self.rg(x);
        self.push(Tensor::from_rows(m, n, out).unwrap(), Op::Scale(x, s), rg)
    }

    /// `x · s` for a `1×1` variable `s`.
    pub fn scale_by(&mut self, x: Var, s: Var) -> Result<Var> {
        if self.shape(s) != (1, 1) {
            return Err(shape_err(
                "scale_by",
                format!("scalar expected, got {:?}", self.shape(s)),
            ));
        }
        let sv = self.value(s).data()[0];
        let (m, n) = self.shape(x);
        let out: Vec<f64> = self.value(x).data().iter().map(|a| a * sv).collect();
        let rg = self.rg(x) || self.rg(s);
        Ok(self.push(Tensor::from_rows(m, n, out)?, Op::ScaleBy(x, s), rg))
    }

    pub fn recip(&mut self, x: Var) -> Var {
        let (m, n) = self.shape(x);
        let out: Vec<f64> = self.value(x).data().iter().map(|a| 1.0 / a).collect();
        let rg = self.rg(x);
        self.push(Tensor::from_rows(m, n, out).unwrap(), Op::Recip(x), rg)
    }

    /// Column-wise concatenation.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or(Error::Empty("concat"))?;
        let m = self.shape(first).0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.shape(p);
            if r != m {
                return Err(shape_err("concat", format!("row counts {m} vs {r}")));
            }
            widths.push(c);
        }
        let n: usize = widths.iter().sum();
        let mut out = vec![0.0; m * n];
        let mut off = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let src = self.value(p).data();
            for i in 0..m {
                out[i * n + off..i * n + off + w].copy_from_slice(&src[i * w..(i + 1) * w]);
            }
            off += w;
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(Tensor::from_rows(m, n, out)?, Op::Concat(parts.to_vec()), rg))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.shape(x);
        if len == 0 || start + len > n {
            return Err(shape_err("slice_cols", format!("[{start}, {}) of {n}", start + len)));
        }
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(m * len);
        for i in 0..m {
            out.extend_from_slice(&src[i * n + start..i * n + start + len]);
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor::from_rows(m, len, out)?, Op::SliceCols(x, start), rg))
    }

    /// `out[r] = x[idx[r]]`.
    pub fn gather_rows(&mut self, x: Var, idx: Arc<[usize]>) -> Result<Var> {
        let (m, n) = self.shape(x);
        if idx.is_empty() {
            return Err(Error::Empty("gather_rows index"));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= m) {
            return Err(shape_err("gather_rows", format!("index {bad} >= {m}")));
        }
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(idx.len() * n);
        for &i in idx.iter() {
            out.extend_from_slice(&src[i * n..(i + 1) * n]);
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor::from_rows(idx.len(), n, out)?, Op::GatherRows(x, idx), rg))
    }

    /// `out[idx[r]] += x[r]`, summed in row order of `x`.
    pub fn scatter_add_rows(&mut self, x: Var, idx: Arc<[usize]>, out_rows: usize) -> Result<Var> {
        let (m, n) = self.shape(x);
        if idx.len() != m {
            return Err(shape_err(
                "scatter_add_rows",
                format!("{} indices for {m} rows", idx.len()),
            ));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= out_rows) {
            return Err(shape_err("scatter_add_rows", format!("index {bad} >= {out_rows}")));
        }
        let src = self.value(x).data();
        let mut out = vec![0.0; out_rows * n];
        for (r, &i) in idx.iter().enumerate() {
            for (o, s) in out[i * n..(i + 1) * n].iter_mut().zip(&src[r * n..(r + 1) * n]) {
                *o += s;
            }
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor::from_rows(out_rows, n, out)?, Op::ScatterAddRows(x, idx), rg))
    }

    pub fn row_softmax(&mut self, x: Var) -> Result<Var> {
        let (m, n) = self.shape(x);
        if n == 0 {
            return Err(Error::Empty("softmax row"));
        }
        let mut out = self.value(x).data().to_vec();
        for row in out.chunks_mut(n) {
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if !mx.is_finite() {
                return Err(Error::InvalidArgument("row_softmax over non-finite row".into()));
            }
            let mut s = 0.0;
            for v in row.iter_mut() {
                *v = (*v - mx).exp();
                s += *v;
            }
            for v in row.iter_mut() {
                *v /= s;
            }
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor::from_rows(m, n, out)?, Op::RowSoftmax(x), rg))
    }

    /// Per-row standardisation, `(x - mean) / sqrt(var + 1e-5)`, without affine terms.
    pub fn layer_norm(&mut self, x: Var) -> Var {
        let (m, n) = self.shape(x);
        let mut out = self.value(x).data().to_vec();
        let mut inv_std = Vec::with_capacity(m);
        for row in out.chunks_mut(n) {
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + LN_EPS).sqrt();
            for v in row.iter_mut() {
                *v = (*v - mean) * is;
            }
            inv_std.push(is);
        }
        let rg = self.rg(x);
        self.push(Tensor::from_rows(m, n, out).unwrap(), Op::LayerNorm { x, inv_std }, rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let (m, n) = self.shape(x);
        let out: Vec<f64> = self
            .value(x)
            .data()
            .iter()
            .map(|&a| if a > 0.0 { a } else { 0.0 })
            .collect();
        let rg = self.rg(x);
        self.push(Tensor::from_rows(m, n, out).unwrap(), Op::Relu(x), rg)
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Var {
        let (m, n) = self.shape(x);
        let out: Vec<f64> = self
            .value(x)
            .data()
            .iter()
            .map(|&a| 0.5 * a * (1.0 + (GELU_A * (a + GELU_B * a * a * a)).tanh()))
            .collect();
        let rg = self.rg(x);
        self.push(Tensor::from_rows(m, n, out).unwrap(), Op::Gelu(x), rg)
    }

    pub fn activation(&mut self, x: Var, act: Activation) -> Var {
        match act {
            Activation::Relu => self.relu(x),
            Activation::Gelu => self.gelu(x),
        }
    }

    /// Euclidean norm of each row, as an `r×1` column.
    pub fn row_norm(&mut self, x: Var) -> Var {
        let (m, n) = self.shape(x);
        let out: Vec<f64> = self
            .value(x)
            .data()
            .chunks(n)
            .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        let rg = self.rg(x);
        self.push(Tensor::from_rows(m, 1, out).unwrap(), Op::RowNorm(x), rg)
    }

    /// Mean of squared differences over all entries, as a `1×1` value.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mse", a, b)?;
        let va = self.value(a).data();
        let vb = self.value(b).data();
        let s: f64 = va.iter().zip(vb).map(|(x, y)| (x - y) * (x - y)).sum();
        let out = s / va.len() as f64;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::scalar(out), Op::Mse(a, b), rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: f64 = self.value(x).data().iter().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    /// Reverse sweep from a scalar `loss`.
    ///
    /// Intermediate gradients live only for the duration of the call; leaves
    /// and parameters accumulate into their stored gradient, so repeated calls
    /// without [`Tape::zero_grads`] add up.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.shape(loss) != (1, 1) {
            return Err(shape_err(
                "backward",
                format!("scalar loss expected, got {:?}", self.shape(loss)),
            ));
        }
        let mut grads: Vec<Option<Vec<f64>>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            if matches!(self.nodes[idx].op, Op::Leaf | Op::Param) {
                let node = &mut self.nodes[idx];
                match &mut node.grad {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    None => node.grad = Some(g),
                }
            } else {
                self.propagate(&self.nodes[idx].op, idx, &g, &mut grads);
            }
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    fn propagate(&self, op: &Op, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let out = &self.nodes[idx].value;
        let (m, n) = (out.rows(), out.cols());
        let nodes = &self.nodes;
        // accumulate `f(slot)` into the gradient buffer of `v`, allocating lazily
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !nodes[v.0].requires_grad {
                return;
            }
            let buf = grads[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.len()]);
            f(buf);
        };
        match op {
            Op::Leaf | Op::Param => unreachable!(),
            Op::MatMul(a, b) => {
                let (_, k) = self.shape(*a);
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                // dA = dC · Bᵀ
                acc(*a, &mut |buf| {
                    gemm(m, n, k, g, n as isize, 1, bv, 1, n as isize, 1.0, buf);
                });
                // dB = Aᵀ · dC
                acc(*b, &mut |buf| {
                    gemm(k, m, n, av, 1, k as isize, g, n as isize, 1, 1.0, buf);
                });
            }
            Op::Transpose(a) => acc(*a, &mut |buf| {
                // out is m×n, input is n×m
                for i in 0..m {
                    for j in 0..n {
                        buf[j * m + i] += g[i * n + j];
                    }
                }
            }),
            Op::Add(a, b) => {
                acc(*a, &mut |buf| buf.iter_mut().zip(g).for_each(|(x, y)| *x += y));
                acc(*b, &mut |buf| buf.iter_mut().zip(g).for_each(|(x, y)| *x += y));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |buf| buf.iter_mut().zip(g).for_each(|(x, y)| *x += y));
                acc(*b, &mut |buf| buf.iter_mut().zip(g).for_each(|(x, y)| *x -= y));
            }
            Op::Mul(a, b) => {
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                acc(*a, &mut |buf| {
                    for ((x, gi), bi) in buf.iter_mut().zip(g).zip(bv) {
                        *x += gi * bi;
                    }
                });
                acc(*b, &mut |buf| {
                    for ((x, gi), ai) in buf.iter_mut().zip(g).zip(av) {
                        *x += gi * ai;
                    }
                });
            }
            Op::AddRow(x, row) => {
                acc(*x, &mut |buf| buf.iter_mut().zip(g).for_each(|(a, b)| *a += b));
                acc(*row, &mut |buf| {
                    for gr in g.chunks(n) {
                        buf.iter_mut().zip(gr).for_each(|(a, b)| *a += b);
                    }
                });
            }
            Op::MulRow(x, row) => {
                let xv = self.value(*x).data();
                let rv = self.value(*row).data();
                acc(*x, &mut |buf| {
                    for (bi, gr) in buf.chunks_mut(n).zip(g.chunks(n)) {
                        for ((b, gg), r) in bi.iter_mut().zip(gr).zip(rv) {
                            *b += gg * r;
                        }
                    }
                });
                acc(*row, &mut |buf| {
                    for (xr, gr) in xv.chunks(n).zip(g.chunks(n)) {
                        for ((b, gg), xx) in buf.iter_mut().zip(gr).zip(xr) {
                            *b += gg * xx;
                        }
                    }
                });
            }
            Op::MulCol(x, col) => {
                let xv = self.value(*x).data();
                let cv = self.value(*col).data();
                acc(*x, &mut |buf| {
                    for ((bi, gr), &c) in buf.chunks_mut(n).zip(g.chunks(n)).zip(cv) {
                        bi.iter_mut().zip(gr).for_each(|(b, gg)| *b += gg * c);
                    }
                });
                acc(*col, &mut |buf| {
                    for ((b, gr), xr) in buf.iter_mut().zip(g.chunks(n)).zip(xv.chunks(n)) {
                        *b += gr.iter().zip(xr).map(|(a, c)| a * c).sum::<f64>();
                    }
                });
            }
            Op::Scale(x, s) => acc(*x, &mut |buf| buf.iter_mut().zip(g).for_each(|(a, b)| *a += b * s)),
            Op::ScaleBy(x, s) => {
                let sv = self.value(*s).data()[0];
                let xv = self.value(*x).data();
                acc(*x, &mut |buf| buf.iter_mut().zip(g).for_each(|(a, b)| *a += b * sv));
                acc(*s, &mut |buf| {
                    buf[0] += g.iter().zip(xv).map(|(a, b)| a * b).sum::<f64>()
                });
            }
            Op::Recip(x) => {
                let yv = out.data();
                acc(*x, &mut |buf| {
                    for ((b, gg), y) in buf.iter_mut().zip(g).zip(yv) {
                        *b -= gg * y * y;
                    }
                });
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for &p in parts {
                    let w = self.shape(p).1;
                    acc(p, &mut |buf| {
                        for i in 0..m {
                            for (b, gg) in buf[i * w..(i + 1) * w].iter_mut().zip(&g[i * n + off..i * n + off + w]) {
                                *b += gg;
                            }
                        }
                    });
                    off += w;
                }
            }
            Op::SliceCols(x, start) => {
                let w = self.shape(*x).1;
                acc(*x, &mut |buf| {
                    for i in 0..m {
                        for (b, gg) in buf[i * w + start..i * w + start + n]
                            .iter_mut()
                            .zip(&g[i * n..(i + 1) * n])
                        {
                            *b += gg;
                        }
                    }
                });
            }
            Op::GatherRows(x, idx) => acc(*x, &mut |buf| {
                for (r, &i) in idx.iter().enumerate() {
                    for (b, gg) in buf[i * n..(i + 1) * n].iter_mut().zip(&g[r * n..(r + 1) * n]) {
                        *b += gg;
                    }
                }
            }),
            Op::ScatterAddRows(x, idx) => acc(*x, &mut |buf| {
                for (r, &i) in idx.iter().enumerate() {
                    for (b, gg) in buf[r * n..(r + 1) * n].iter_mut().zip(&g[i * n..(i + 1) * n]) {
                        *b += gg;
                    }
                }
            }),
            Op::RowSoftmax(x) => {
                let y = out.data();
                acc(*x, &mut |buf| {
                    for ((bi, gr), yr) in buf.chunks_mut(n).zip(g.chunks(n)).zip(y.chunks(n)) {
                        let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                        for ((b, gg), yy) in bi.iter_mut().zip(gr).zip(yr) {
                            *b += yy * (gg - dot);
                        }
                    }
                });
            }
            Op::LayerNorm { x, inv_std } => {
                let xhat = out.data();
                acc(*x, &mut |buf| {
                    for (((bi, gr), xr), is) in buf.chunks_mut(n).zip(g.chunks(n)).zip(xhat.chunks(n)).zip(inv_std) {
                        let mg = gr.iter().sum::<f64>() / n as f64;
                        let mgx = gr.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>() / n as f64;
                        for ((b, gg), xx) in bi.iter_mut().zip(gr).zip(xr) {
                            *b += is * (gg - mg - xx * mgx);
                        }
                    }
                });
            }
            Op::Relu(x) => {
                let xv = self.value(*x).data();
                acc(*x, &mut |buf| {
                    for ((b, gg), xx) in buf.iter_mut().zip(g).zip(xv) {
                        if *xx > 0.0 {
                            *b += gg;
                        }
                    }
                });
            }
            Op::Gelu(x) => {
                let xv = self.value(*x).data();
                acc(*x, &mut |buf| {
                    for ((b, gg), &a) in buf.iter_mut().zip(g).zip(xv) {
                        let t = (GELU_A * (a + GELU_B * a * a * a)).tanh();
                        let d = 0.5 * (1.0 + t) + 0.5 * a * (1.0 - t * t) * GELU_A * (1.0 + 3.0 * GELU_B * a * a);
                        *b += gg * d;
                    }
                });
            }
            Op::RowNorm(x) => {
                let xv = self.value(*x).data();
                let w = self.shape(*x).1;
                let nv = out.data();
                acc(*x, &mut |buf| {
                    for (((bi, xr), &nr), &gg) in buf.chunks_mut(w).zip(xv.chunks(w)).zip(nv).zip(g) {
                        if nr > 0.0 {
                            for (b, xx) in bi.iter_mut().zip(xr) {
                                *b += gg * xx / nr;
                            }
                        }
                    }
                });
            }
            Op::Mse(a, b) => {
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                let c = 2.0 * g[0] / av.len() as f64;
                acc(*a, &mut |buf| {
                    for ((d, x), y) in buf.iter_mut().zip(av).zip(bv) {
                        *d += c * (x - y);
                    }
                });
                acc(*b, &mut |buf| {
                    for ((d, x), y) in buf.iter_mut().zip(av).zip(bv) {
                        *d -= c * (x - y);
                    }
                });
            }
            Op::Sum(x) => acc(*x, &mut |buf| buf.iter_mut().for_each(|b| *b += g[0])),
        }
    }
}
