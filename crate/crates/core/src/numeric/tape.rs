//! Reverse-mode differentiation over batched rank-2 arrays.
//!
//! A [`Tape`] records each primitive as it is evaluated. Calling
//! [`Tape::backward`] on a scalar node walks the record in reverse and
//! accumulates gradients for every parameter leaf. Only the primitives the
//! world-model losses need are provided.

use crate::error::{Error, Result};
use crate::numeric::array::gemm;
use crate::numeric::{activation, DenseArray, Gradients, ParamId, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Const,
    Param(ParamId),
    MatMul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    /// Normalized output is the node value; keeps the per-row 1/σ.
    LayerNorm(Var, Vec<f64>),
    Mish(Var),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Square(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    MulConst(Var, DenseArray),
    Sum(Var),
    SumCols(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize, usize),
    BceWithLogits(Var, DenseArray),
}

#[derive(Debug)]
struct Node {
    value: DenseArray,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    pub fn value(&self, v: Var) -> &DenseArray {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: DenseArray, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A leaf that never receives gradient (also used as stop-gradient).
    pub fn constant(&mut self, value: DenseArray) -> Var {
        self.push(value, Op::Const, false)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.get(id).clone(), Op::Param(id), true)
    }

    pub fn stop_gradient(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    /// `x (B×n) + row (1×n)` broadcast over rows.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let xv = self.value(x);
        let rv = self.value(row);
        if rv.len() != xv.cols() {
            return Err(Error::contract(format!(
                "add_row: row of {} for {} columns",
                rv.len(),
                xv.cols()
            )));
        }
        let mut out = xv.clone();
        let c = out.cols();
        for r in out.data_mut().chunks_exact_mut(c) {
            for (v, b) in r.iter_mut().zip(rv.data()) {
                *v += b;
            }
        }
        let rg = self.rg(x) || self.rg(row);
        Ok(self.push(out, Op::AddRow(x, row), rg))
    }

    pub fn mul_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let xv = self.value(x);
        let rv = self.value(row);
        if rv.len() != xv.cols() {
            return Err(Error::contract("mul_row: width mismatch"));
        }
        let mut out = xv.clone();
        let c = out.cols();
        for r in out.data_mut().chunks_exact_mut(c) {
            for (v, b) in r.iter_mut().zip(rv.data()) {
                *v *= b;
            }
        }
        let rg = self.rg(x) || self.rg(row);
        Ok(self.push(out, Op::MulRow(x, row), rg))
    }

    /// Per-row standardization without affine parameters.
    pub fn layer_norm(&mut self, x: Var, eps: f64) -> Var {
        let xv = self.value(x);
        let (rows, cols) = (xv.rows(), xv.cols());
        let mut out = xv.clone();
        let mut rstd = Vec::with_capacity(rows);
        for r in 0..rows {
            rstd.push(activation::standardize_row(out.row_slice_mut(r), eps));
        }
        debug_assert_eq!(out.cols(), cols);
        let rg = self.rg(x);
        self.push(out, Op::LayerNorm(x, rstd), rg)
    }

    fn unary(&mut self, x: Var, f: fn(f64) -> f64, op: Op) -> Var {
        let out = self.value(x).map(f);
        let rg = self.rg(x);
        self.push(out, op, rg)
    }

    pub fn mish(&mut self, x: Var) -> Var {
        self.unary(x, activation::mish, Op::Mish(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, activation::sigmoid, Op::Sigmoid(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, f64::exp, Op::Exp(x))
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, |v| v * v, Op::Square(x))
    }

    fn binary(&mut self, a: Var, b: Var, f: fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.len() != bv.len() {
            return Err(Error::contract(format!(
                "elementwise op on {:?} and {:?}",
                av.shape(),
                bv.shape()
            )));
        }
        let out = av.zip_map(bv, f);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let out = self.value(x).map(|v| v * s);
        let rg = self.rg(x);
        self.push(out, Op::Scale(x, s), rg)
    }

    pub fn add_scalar(&mut self, x: Var, s: f64) -> Var {
        let out = self.value(x).map(|v| v + s);
        let rg = self.rg(x);
        self.push(out, Op::AddScalar(x), rg)
    }

    /// Elementwise product with a constant array of the same size.
    pub fn mul_const(&mut self, x: Var, c: DenseArray) -> Result<Var> {
        let xv = self.value(x);
        if xv.len() != c.len() {
            return Err(Error::contract("mul_const: size mismatch"));
        }
        let out = xv.zip_map(&c, |a, b| a * b);
        let rg = self.rg(x);
        Ok(self.push(out, Op::MulConst(x, c), rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let out = DenseArray::scalar(self.value(x).sum());
        let rg = self.rg(x);
        self.push(out, Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).len() as f64;
        let s = self.sum(x);
        self.scale(s, 1.0 / n)
    }

    /// Row sums: `(B×n) -> (B×1)`.
    pub fn sum_cols(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let rows = xv.rows();
        let data = (0..rows).map(|r| xv.row_slice(r).iter().sum()).collect();
        let out = DenseArray::matrix(rows, 1, data).expect("rows > 0");
        let rg = self.rg(x);
        self.push(out, Op::SumCols(x), rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let arrays: Vec<&DenseArray> = parts.iter().map(|&p| self.value(p)).collect();
        let out = DenseArray::concat_cols(&arrays)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), rg))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let xv = self.value(x);
        if start >= end || end > xv.cols() {
            return Err(Error::contract(format!(
                "slice_cols {start}..{end} of {} columns",
                xv.cols()
            )));
        }
        let out = xv.slice_cols(start, end);
        let rg = self.rg(x);
        Ok(self.push(out, Op::SliceCols(x, start, end), rg))
    }

    /// Elementwise binary cross-entropy of `sigmoid(logits)` against `targets`.
    pub fn bce_with_logits(&mut self, logits: Var, targets: DenseArray) -> Result<Var> {
        let lv = self.value(logits);
        if lv.len() != targets.len() {
            return Err(Error::contract("bce_with_logits: size mismatch"));
        }
        let out = lv.zip_map(&targets, activation::bce_with_logits);
        let rg = self.rg(logits);
        Ok(self.push(out, Op::BceWithLogits(logits, targets), rg))
    }

    /// Reverse pass from a scalar node. Returns gradients for every
    /// parameter leaf reachable from `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<DenseArray>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(DenseArray::filled(lv.shape(), 1.0));
        let mut out = Gradients::new(0);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            match &node.op {
                Op::Const => {}
                Op::Param(id) => out.accumulate(*id, &g),
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                    if self.rg(*a) {
                        let mut ga = vec![0.0; m * k];
                        gemm(false, true, m, n, k, g.data(), bv.data(), &mut ga, 0.0);
                        acc(&mut grads, *a, av.shape(), ga);
                    }
                    if self.rg(*b) {
                        let mut gb = vec![0.0; k * n];
                        gemm(true, false, k, m, n, av.data(), g.data(), &mut gb, 0.0);
                        acc(&mut grads, *b, bv.shape(), gb);
                    }
                }
                Op::AddRow(x, row) => {
                    if self.rg(*row) {
                        let rv = self.value(*row);
                        let c = g.cols();
                        let mut gr = vec![0.0; c];
                        for grow in g.data().chunks_exact(c) {
                            for (a, v) in gr.iter_mut().zip(grow) {
                                *a += v;
                            }
                        }
                        acc(&mut grads, *row, rv.shape(), gr);
                    }
                    if self.rg(*x) {
                        acc(&mut grads, *x, g.shape(), g.data().to_vec());
                    }
                }
                Op::MulRow(x, row) => {
                    let (xv, rv) = (self.value(*x), self.value(*row));
                    let c = g.cols();
                    if self.rg(*row) {
                        let mut gr = vec![0.0; c];
                        for (grow, xrow) in g.data().chunks_exact(c).zip(xv.data().chunks_exact(c)) {
                            for ((a, gv), xv) in gr.iter_mut().zip(grow).zip(xrow) {
                                *a += gv * xv;
                            }
                        }
                        acc(&mut grads, *row, rv.shape(), gr);
                    }
                    if self.rg(*x) {
                        let gx = g
                            .data()
                            .chunks_exact(c)
                            .flat_map(|grow| grow.iter().zip(rv.data()).map(|(gv, r)| gv * r))
                            .collect();
                        acc(&mut grads, *x, xv.shape(), gx);
                    }
                }
                Op::LayerNorm(x, rstd) => {
                    let y = &node.value;
                    let c = y.cols();
                    let mut gx = vec![0.0; y.len()];
                    for (r, &s) in rstd.iter().enumerate() {
                        let yr = y.row_slice(r);
                        let gr = g.row_slice(r);
                        let mean_g = gr.iter().sum::<f64>() / c as f64;
                        let mean_gy =
                            gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / c as f64;
                        for j in 0..c {
                            gx[r * c + j] = s * (gr[j] - mean_g - yr[j] * mean_gy);
                        }
                    }
                    acc(&mut grads, *x, y.shape(), gx);
                }
                Op::Mish(x) => {
                    let xv = self.value(*x);
                    let gx = g
                        .data()
                        .iter()
                        .zip(xv.data())
                        .map(|(gv, &xv)| gv * activation::mish_grad(xv))
                        .collect();
                    acc(&mut grads, *x, xv.shape(), gx);
                }
                Op::Tanh(x) => {
                    let y = &node.value;
                    let gx = g
                        .data()
                        .iter()
                        .zip(y.data())
                        .map(|(gv, yv)| gv * (1.0 - yv * yv))
                        .collect();
                    acc(&mut grads, *x, y.shape(), gx);
                }
                Op::Sigmoid(x) => {
                    let y = &node.value;
                    let gx = g
                        .data()
                        .iter()
                        .zip(y.data())
                        .map(|(gv, yv)| gv * yv * (1.0 - yv))
                        .collect();
                    acc(&mut grads, *x, y.shape(), gx);
                }
                Op::Exp(x) => {
                    let y = &node.value;
                    let gx = g.data().iter().zip(y.data()).map(|(a, b)| a * b).collect();
                    acc(&mut grads, *x, y.shape(), gx);
                }
                Op::Square(x) => {
                    let xv = self.value(*x);
                    let gx = g
                        .data()
                        .iter()
                        .zip(xv.data())
                        .map(|(a, b)| 2.0 * a * b)
                        .collect();
                    acc(&mut grads, *x, xv.shape(), gx);
                }
                Op::Add(a, b) => {
                    for v in [*a, *b] {
                        if self.rg(v) {
                            acc(&mut grads, v, self.value(v).shape(), g.data().to_vec());
                        }
                    }
                }
                Op::Sub(a, b) => {
                    if self.rg(*a) {
                        acc(&mut grads, *a, self.value(*a).shape(), g.data().to_vec());
                    }
                    if self.rg(*b) {
                        let gb = g.data().iter().map(|v| -v).collect();
                        acc(&mut grads, *b, self.value(*b).shape(), gb);
                    }
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if self.rg(*a) {
                        let ga = g.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
                        acc(&mut grads, *a, av.shape(), ga);
                    }
                    if self.rg(*b) {
                        let gb = g.data().iter().zip(av.data()).map(|(x, y)| x * y).collect();
                        acc(&mut grads, *b, bv.shape(), gb);
                    }
                }
                Op::Scale(x, s) => {
                    let gx = g.data().iter().map(|v| v * s).collect();
                    acc(&mut grads, *x, self.value(*x).shape(), gx);
                }
                Op::AddScalar(x) => {
                    acc(&mut grads, *x, self.value(*x).shape(), g.data().to_vec());
                }
                Op::MulConst(x, c) => {
                    let gx = g.data().iter().zip(c.data()).map(|(a, b)| a * b).collect();
                    acc(&mut grads, *x, self.value(*x).shape(), gx);
                }
                Op::Sum(x) => {
                    let xv = self.value(*x);
                    acc(&mut grads, *x, xv.shape(), vec![g.item(); xv.len()]);
                }
                Op::SumCols(x) => {
                    let xv = self.value(*x);
                    let c = xv.cols();
                    let gx = (0..xv.len()).map(|j| g.data()[j / c]).collect();
                    acc(&mut grads, *x, xv.shape(), gx);
                }
                Op::ConcatCols(parts) => {
                    let rows = g.rows();
                    let mut offset = 0;
                    for &p in parts {
                        let pv = self.value(p);
                        let w = pv.cols();
                        if self.rg(p) {
                            let mut gp = Vec::with_capacity(rows * w);
                            for r in 0..rows {
                                gp.extend_from_slice(&g.row_slice(r)[offset..offset + w]);
                            }
                            acc(&mut grads, p, pv.shape(), gp);
                        }
                        offset += w;
                    }
                }
                Op::SliceCols(x, start, end) => {
                    let xv = self.value(*x);
                    let c = xv.cols();
                    let w = end - start;
                    let mut gx = vec![0.0; xv.len()];
                    for r in 0..xv.rows() {
                        gx[r * c + start..r * c + end].copy_from_slice(&g.data()[r * w..(r + 1) * w]);
                    }
                    acc(&mut grads, *x, xv.shape(), gx);
                }
                Op::BceWithLogits(l, t) => {
                    let lv = self.value(*l);
                    let gx = g
                        .data()
                        .iter()
                        .zip(lv.data().iter().zip(t.data()))
                        .map(|(gv, (&x, &y))| gv * (activation::sigmoid(x) - y))
                        .collect();
                    acc(&mut grads, *l, lv.shape(), gx);
                }
            }
        }
        Ok(out)
    }
}

fn acc(grads: &mut [Option<DenseArray>], v: Var, shape: &[usize], g: Vec<f64>) {
    match &mut grads[v.0] {
        Some(existing) => {
            for (a, b) in existing.data_mut().iter_mut().zip(&g) {
                *a += b;
            }
        }
        slot @ None => {
            *slot = Some(DenseArray::new(shape.to_vec(), g).expect("gradient shape"));
        }
    }
}
