//! A small reverse-mode tape over dense `f64` matrices.
//!
//! A [`Graph`] is rebuilt for every forward pass. Parameters enter through
//! [`Graph::param`], which copies the current value out of a [`ParamStore`];
//! [`Graph::backward`] accumulates gradients back into the same store.

mod gradcheck;
mod params;
mod tensor;

pub use gradcheck::{grad_check, GradCheckEntry, GradCheckReport};
pub use params::{ParamGroup, ParamId, ParamStore, Parameter, CHECKPOINT_VERSION};
pub(crate) use params::StoredParams;
pub use tensor::Tensor;

use tensor::gemm;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(ParamId),
    Linear { x: Var, w: Var, b: Var },
    Relu(Var),
    Sigmoid(Var),
    Concat(Vec<Var>),
    Gather { x: Var, idx: Vec<usize> },
    ScatterAdd { x: Var, idx: Vec<usize> },
    RowScale { x: Var, s: Var },
    Add(Var, Var),
    Scale(Var, f64),
    ScalarAffine { s: Var, alpha: f64 },
    Mse { pred: Var, target: Tensor },
}

#[derive(Debug, Default)]
pub struct Graph {
    values: Vec<Tensor>,
    ops: Vec<Op>,
    needs_grad: Vec<bool>,
}

/// Gradients of one scalar with respect to every node of a graph.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }
}

fn shape_err(op: &'static str, msg: String) -> Error {
    Error::ShapeMismatch { op, msg }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.values.push(value);
        self.ops.push(op);
        self.needs_grad.push(needs_grad);
        Var(self.values.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.needs_grad[v.0]
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.values[v.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Constant input; receives no gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.get(id).value.clone(), Op::Param(id), true)
    }

    /// `x W + b` with `W: in x out` and `b: 1 x out`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xs, ws, bs) = (self.value(x).shape(), self.value(w).shape(), self.value(b).shape());
        if xs.1 != ws.0 || bs != (1, ws.1) {
            return Err(shape_err("linear", format!("x {xs:?}, W {ws:?}, b {bs:?}")));
        }
        let mut out = Tensor::zeros(xs.0, ws.1);
        let bias = self.value(b).data().to_vec();
        for r in 0..xs.0 {
            out.row_mut(r).copy_from_slice(&bias);
        }
        gemm(false, false, self.value(x), self.value(w), 1.0, &mut out);
        let ng = self.ng(x) || self.ng(w) || self.ng(b);
        Ok(self.push(out, Op::Linear { x, w, b }, ng))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        let ng = self.ng(x);
        self.push(out, Op::Relu(x), ng)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        out.data_mut().iter_mut().for_each(|v| *v = sigmoid(*v));
        let ng = self.ng(x);
        self.push(out, Op::Sigmoid(x), ng)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts.first().map_or(0, |&p| self.value(p).rows());
        if let Some(&bad) = parts.iter().find(|&&p| self.value(p).rows() != rows) {
            return Err(shape_err(
                "concat_cols",
                format!("row counts {rows} and {}", self.value(bad).rows()),
            ));
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &p in parts {
                let src = self.value(p).row(r);
                out.row_mut(r)[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(out, Op::Concat(parts.to_vec()), ng))
    }

    /// `out[r] = x[idx[r]]`.
    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        if let Some(&bad) = idx.iter().find(|&&i| i >= xv.rows()) {
            return Err(Error::IndexRange {
                op: "gather_rows",
                index: bad,
                rows: xv.rows(),
            });
        }
        let mut out = Tensor::zeros(idx.len(), xv.cols());
        for (r, &i) in idx.iter().enumerate() {
            out.row_mut(r).copy_from_slice(xv.row(i));
        }
        let ng = self.ng(x);
        Ok(self.push(out, Op::Gather { x, idx: idx.to_vec() }, ng))
    }

    /// `out[idx[r]] += x[r]`, accumulated in ascending `r`.
    pub fn scatter_add_rows(&mut self, x: Var, idx: &[usize], out_rows: usize) -> Result<Var> {
        let xv = self.value(x);
        if idx.len() != xv.rows() {
            return Err(shape_err(
                "scatter_add_rows",
                format!("{} indices for {} rows", idx.len(), xv.rows()),
            ));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= out_rows) {
            return Err(Error::IndexRange {
                op: "scatter_add_rows",
                index: bad,
                rows: out_rows,
            });
        }
        let mut out = Tensor::zeros(out_rows, xv.cols());
        for (r, &i) in idx.iter().enumerate() {
            for (o, v) in out.row_mut(i).iter_mut().zip(xv.row(r)) {
                *o += v;
            }
        }
        let ng = self.ng(x);
        Ok(self.push(out, Op::ScatterAdd { x, idx: idx.to_vec() }, ng))
    }

    /// `out[r] = s[r] * x[r]` with `s: rows x 1`.
    pub fn row_scale(&mut self, x: Var, s: Var) -> Result<Var> {
        let (xv, sv) = (self.value(x), self.value(s));
        if sv.shape() != (xv.rows(), 1) {
            return Err(shape_err("row_scale", format!("x {:?}, s {:?}", xv.shape(), sv.shape())));
        }
        let mut out = xv.clone();
        for r in 0..xv.rows() {
            let k = sv.get(r, 0);
            out.row_mut(r).iter_mut().for_each(|v| *v *= k);
        }
        let ng = self.ng(x) || self.ng(s);
        Ok(self.push(out, Op::RowScale { x, s }, ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(shape_err(
                "add",
                format!("{:?} vs {:?}", self.value(a).shape(), self.value(b).shape()),
            ));
        }
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Add(a, b), ng))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let mut out = self.value(x).clone();
        out.data_mut().iter_mut().for_each(|v| *v *= c);
        let ng = self.ng(x);
        self.push(out, Op::Scale(x, c), ng)
    }

    /// Column vector `alpha (s - offsets[i])` from a `1 x 1` node `s`.
    pub fn scalar_affine(&mut self, s: Var, offsets: &[f64], alpha: f64) -> Result<Var> {
        if self.value(s).shape() != (1, 1) {
            return Err(shape_err("scalar_affine", format!("s {:?}", self.value(s).shape())));
        }
        let sv = self.value(s).item();
        let out = Tensor::from_vec(offsets.len(), 1, offsets.iter().map(|c| alpha * (sv - c)).collect())?;
        let ng = self.ng(s);
        Ok(self.push(
            out,
            Op::ScalarAffine { s, alpha },
            ng,
        ))
    }

    /// Mean squared error over all entries, as a `1 x 1` node.
    pub fn mse(&mut self, pred: Var, target: &Tensor) -> Result<Var> {
        let p = self.value(pred);
        if p.shape() != target.shape() {
            return Err(shape_err("mse", format!("pred {:?}, target {:?}", p.shape(), target.shape())));
        }
        let n = p.data().len().max(1) as f64;
        let sum: f64 = p.data().iter().zip(target.data()).map(|(a, b)| (a - b) * (a - b)).sum();
        let ng = self.ng(pred);
        Ok(self.push(
            Tensor::scalar(sum / n),
            Op::Mse {
                pred,
                target: target.clone(),
            },
            ng,
        ))
    }

    /// Reverse sweep from a `1 x 1` node.
    pub fn gradients(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(Error::NonScalarLoss {
                rows: lv.rows(),
                cols: lv.cols(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.values.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for k in (0..=loss.0).rev() {
            let Some(dy) = grads[k].take() else { continue };
            if !self.needs_grad[k] {
                grads[k] = Some(dy);
                continue;
            }
            self.propagate(k, &dy, &mut grads);
            grads[k] = Some(dy);
        }
        Ok(Gradients { grads })
    }

    /// Accumulates d(loss)/d(param) into `store` for every parameter node.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<()> {
        let g = self.gradients(loss)?;
        for (k, op) in self.ops.iter().enumerate() {
            if let (Op::Param(id), Some(grad)) = (op, &g.grads[k]) {
                store.get_mut(*id).grad.add_assign(grad);
            }
        }
        Ok(())
    }

    fn propagate(&self, k: usize, dy: &Tensor, grads: &mut [Option<Tensor>]) {
        let acc = |grads: &mut [Option<Tensor>], v: Var, shape: (usize, usize)| -> usize {
            grads[v.0].get_or_insert_with(|| Tensor::zeros(shape.0, shape.1));
            v.0
        };
        let y = &self.values[k];
        match &self.ops[k] {
            Op::Leaf | Op::Param(_) => {}
            Op::Linear { x, w, b } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                if self.ng(*w) {
                    let i = acc(grads, *w, wv.shape());
                    gemm(true, false, xv, dy, 1.0, grads[i].as_mut().unwrap());
                }
                if self.ng(*b) {
                    let i = acc(grads, *b, (1, wv.cols()));
                    let db = grads[i].as_mut().unwrap().data_mut();
                    for r in 0..dy.rows() {
                        for (a, v) in db.iter_mut().zip(dy.row(r)) {
                            *a += v;
                        }
                    }
                }
                if self.ng(*x) {
                    let i = acc(grads, *x, xv.shape());
                    gemm(false, true, dy, wv, 1.0, grads[i].as_mut().unwrap());
                }
            }
            Op::Relu(x) => {
                if self.ng(*x) {
                    let i = acc(grads, *x, y.shape());
                    let dx = grads[i].as_mut().unwrap().data_mut();
                    for ((a, g), o) in dx.iter_mut().zip(dy.data()).zip(y.data()) {
                        if *o > 0.0 {
                            *a += g;
                        }
                    }
                }
            }
            Op::Sigmoid(x) => {
                if self.ng(*x) {
                    let i = acc(grads, *x, y.shape());
                    let dx = grads[i].as_mut().unwrap().data_mut();
                    for ((a, g), o) in dx.iter_mut().zip(dy.data()).zip(y.data()) {
                        *a += g * o * (1.0 - o);
                    }
                }
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for p in parts {
                    let (rows, cols) = self.value(*p).shape();
                    if self.ng(*p) {
                        let i = acc(grads, *p, (rows, cols));
                        let dx = grads[i].as_mut().unwrap();
                        for r in 0..rows {
                            for (a, g) in dx.row_mut(r).iter_mut().zip(&dy.row(r)[off..off + cols]) {
                                *a += g;
                            }
                        }
                    }
                    off += cols;
                }
            }
            Op::Gather { x, idx } => {
                if self.ng(*x) {
                    let i = acc(grads, *x, self.value(*x).shape());
                    let dx = grads[i].as_mut().unwrap();
                    for (r, &src) in idx.iter().enumerate() {
                        for (a, g) in dx.row_mut(src).iter_mut().zip(dy.row(r)) {
                            *a += g;
                        }
                    }
                }
            }
            Op::ScatterAdd { x, idx } => {
                if self.ng(*x) {
                    let i = acc(grads, *x, self.value(*x).shape());
                    let dx = grads[i].as_mut().unwrap();
                    for (r, &dst) in idx.iter().enumerate() {
                        for (a, g) in dx.row_mut(r).iter_mut().zip(dy.row(dst)) {
                            *a += g;
                        }
                    }
                }
            }
            Op::RowScale { x, s } => {
                let (xv, sv) = (self.value(*x), self.value(*s));
                if self.ng(*x) {
                    let i = acc(grads, *x, xv.shape());
                    let dx = grads[i].as_mut().unwrap();
                    for r in 0..xv.rows() {
                        let k = sv.get(r, 0);
                        for (a, g) in dx.row_mut(r).iter_mut().zip(dy.row(r)) {
                            *a += k * g;
                        }
                    }
                }
                if self.ng(*s) {
                    let i = acc(grads, *s, sv.shape());
                    let ds = grads[i].as_mut().unwrap().data_mut();
                    for (r, d) in ds.iter_mut().enumerate() {
                        *d += dy.row(r).iter().zip(xv.row(r)).map(|(g, v)| g * v).sum::<f64>();
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if self.ng(*v) {
                        let i = acc(grads, *v, y.shape());
                        grads[i].as_mut().unwrap().add_assign(dy);
                    }
                }
            }
            Op::Scale(x, c) => {
                if self.ng(*x) {
                    let i = acc(grads, *x, y.shape());
                    let dx = grads[i].as_mut().unwrap().data_mut();
                    for (a, g) in dx.iter_mut().zip(dy.data()) {
                        *a += c * g;
                    }
                }
            }
            Op::ScalarAffine { s, alpha } => {
                if self.ng(*s) {
                    let i = acc(grads, *s, (1, 1));
                    grads[i].as_mut().unwrap().data_mut()[0] += alpha * dy.data().iter().sum::<f64>();
                }
            }
            Op::Mse { pred, target } => {
                if self.ng(*pred) {
                    let p = self.value(*pred);
                    let i = acc(grads, *pred, p.shape());
                    let n = p.data().len().max(1) as f64;
                    let g = dy.item() * 2.0 / n;
                    let dx = grads[i].as_mut().unwrap().data_mut();
                    for ((a, pv), tv) in dx.iter_mut().zip(p.data()).zip(target.data()) {
                        *a += g * (pv - tv);
                    }
                }
            }
        }
    }
}

/// Overflow-safe logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
