//! Eager reverse-mode differentiation over a per-evaluation tape.
//!
//! Each forward call computes its value immediately and registers a node
//! with a manual backward rule. The network is a fixed DAG per evaluation,
//! so the tape is append-only and `backward` is a single reverse sweep.
//! Parameters live outside the tape in a [`ParamSet`]; ops that touch them
//! reference a [`ParamId`] and accumulate into `Parameter::grad`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::error::{Error, Result};
use crate::param::{ParamId, ParamSet};
use crate::tensor::{check_same_shape, Tensor};

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Input,
    /// W.x + b with W `[m x n]`, x `[n]`, optional bias `[m]`.
    Affine { w: ParamId, b: Option<ParamId>, x: Var },
    /// Column `idx` of W, i.e. W applied to a one-hot vector.
    OneHotCol { w: ParamId, idx: usize },
    /// w.x for a vector parameter w.
    DotParam { w: ParamId, x: Var },
    Sigmoid { x: Var },
    Tanh { x: Var },
    Relu { x: Var },
    /// Softmax over a vector; `false` mask entries get probability exactly 0.
    SoftmaxMasked { x: Var, mask: Option<Vec<bool>> },
    LogSoftmax { x: Var },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    /// a*x + c, elementwise with scalar constants.
    ScaleShift { x: Var, a: f64 },
    Concat { parts: Vec<Var> },
    Dot { a: Var, b: Var },
    /// Euclidean distance ||a-b||; subgradient 0 at a == b.
    L2Distance { a: Var, b: Var },
    /// Euclidean norm ||a||; subgradient 0 at a == 0.
    L2Norm { x: Var },
    SumVec { x: Var },
    /// sum_l weights[l] * items[l]
    WeightedSum { weights: Var, items: Vec<Var> },
    StackScalars { parts: Vec<Var> },
    IndexScalar { x: Var, idx: usize },
    Log { x: Var },
    Clamp { x: Var, lo: f64, hi: f64 },
    /// Scalar a/b; defined as 0 (value and gradient) when b == 0.
    DivGuard { a: Var, b: Var },
}

struct Node {
    value: Tensor,
    grad: Option<Tensor>,
    op: Op,
}

pub struct Tape {
    nodes: Vec<Node>,
    recording: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), recording: true }
    }

    /// Values only; `backward` on such a tape is a contract error.
    pub fn forward_only() -> Self {
        Self { nodes: Vec::new(), recording: false }
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> Result<f64> {
        self.nodes[v.0].value.item()
    }

    /// Gradient accumulated at a node (inputs included), if backward reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    /// Drop node gradients so another root can be differentiated on the same
    /// tape. Parameter gradients are left untouched.
    pub fn reset_grads(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let op = if self.recording { op } else { Op::Input };
        self.nodes.push(Node { value, grad: None, op });
        Var(self.nodes.len() - 1)
    }

    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Input)
    }

    pub fn input_scalar(&mut self, x: f64) -> Var {
        self.push(Tensor::scalar(x), Op::Input)
    }

    pub fn input_vector(&mut self, data: Vec<f64>) -> Var {
        self.push(Tensor::vector(data), Op::Input)
    }

    pub fn affine(&mut self, ps: &ParamSet, w: ParamId, b: Option<ParamId>, x: Var) -> Result<Var> {
        let wt = ps.value(w);
        let xv = self.value(x);
        if wt.shape().len() != 2 || wt.cols() != xv.len() {
            return Err(Error::Config(format!(
                "affine: weight {:?} against input {:?}",
                wt.shape(),
                xv.shape()
            )));
        }
        let (rows, cols) = (wt.rows(), wt.cols());
        if let Some(b) = b {
            if ps.value(b).len() != rows {
                return Err(Error::Config(format!(
                    "affine: bias {:?} against weight {:?}",
                    ps.value(b).shape(),
                    wt.shape()
                )));
            }
        }
        let wd = wt.data();
        let xd = xv.data();
        let mut out = vec![0.0; rows];
        for r in 0..rows {
            let row = &wd[r * cols..(r + 1) * cols];
            let mut acc = 0.0;
            for c in 0..cols {
                acc += row[c] * xd[c];
            }
            out[r] = acc;
        }
        if let Some(b) = b {
            let bd = ps.value(b).data();
            for r in 0..rows {
                out[r] += bd[r];
            }
        }
        Ok(self.push(Tensor::vector(out), Op::Affine { w, b, x }))
    }

    pub fn onehot_col(&mut self, ps: &ParamSet, w: ParamId, idx: usize) -> Result<Var> {
        let wt = ps.value(w);
        if wt.shape().len() != 2 {
            return Err(Error::Config(format!(
                "onehot_col: weight {:?} is not a matrix",
                wt.shape()
            )));
        }
        if idx >= wt.cols() {
            return Err(Error::Validation(format!(
                "one-hot index {idx} out of vocabulary {}",
                wt.cols()
            )));
        }
        let (rows, cols) = (wt.rows(), wt.cols());
        let wd = wt.data();
        let out: Vec<f64> = (0..rows).map(|r| wd[r * cols + idx]).collect();
        Ok(self.push(Tensor::vector(out), Op::OneHotCol { w, idx }))
    }

    pub fn dot_param(&mut self, ps: &ParamSet, w: ParamId, x: Var) -> Result<Var> {
        let wt = ps.value(w);
        let xv = self.value(x);
        if wt.shape().len() != 1 || wt.len() != xv.len() {
            return Err(Error::Config(format!(
                "dot_param: weight {:?} against input {:?}",
                wt.shape(),
                xv.shape()
            )));
        }
        let y: f64 = wt.data().iter().zip(xv.data()).map(|(a, b)| a * b).sum();
        Ok(self.push(Tensor::scalar(y), Op::DotParam { w, x }))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out: Vec<f64> = self.value(x).data().iter().map(|&v| sigmoid(v)).collect();
        self.push(Tensor::vector(out), Op::Sigmoid { x })
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out: Vec<f64> = self.value(x).data().iter().map(|&v| v.tanh()).collect();
        self.push(Tensor::vector(out), Op::Tanh { x })
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out: Vec<f64> = self.value(x).data().iter().map(|&v| v.max(0.0)).collect();
        self.push(Tensor::vector(out), Op::Relu { x })
    }

    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        self.softmax_masked(x, None)
    }

    /// Softmax over the unmasked positions; masked entries come out exactly 0.
    pub fn softmax_masked(&mut self, x: Var, mask: Option<&[bool]>) -> Result<Var> {
        let xd = self.value(x).data();
        if let Some(m) = mask {
            if m.len() != xd.len() {
                return Err(Error::Config(format!(
                    "softmax mask length {} against input {}",
                    m.len(),
                    xd.len()
                )));
            }
            if m.iter().all(|&keep| !keep) {
                return Err(Error::Validation("softmax: all positions masked".into()));
            }
        }
        let keep = |i: usize| mask.map_or(true, |m| m[i]);
        let mut mx = f64::NEG_INFINITY;
        for (i, &v) in xd.iter().enumerate() {
            if keep(i) && v > mx {
                mx = v;
            }
        }
        let mut out = vec![0.0; xd.len()];
        let mut sum = 0.0;
        for (i, &v) in xd.iter().enumerate() {
            if keep(i) {
                let e = (v - mx).exp();
                out[i] = e;
                sum += e;
            }
        }
        for o in &mut out {
            *o /= sum;
        }
        Ok(self.push(
            Tensor::vector(out),
            Op::SoftmaxMasked { x, mask: mask.map(|m| m.to_vec()) },
        ))
    }

    pub fn log_softmax(&mut self, x: Var) -> Var {
        let xd = self.value(x).data();
        let mx = xd.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = xd.iter().map(|&v| (v - mx).exp()).sum::<f64>().ln() + mx;
        let out: Vec<f64> = xd.iter().map(|&v| v - lse).collect();
        self.push(Tensor::vector(out), Op::LogSoftmax { x })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same_shape("add", self.value(a), self.value(b))?;
        let out: Vec<f64> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        Ok(self.push(Tensor::vector(out), Op::Add { a, b }))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same_shape("sub", self.value(a), self.value(b))?;
        let out: Vec<f64> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x - y)
            .collect();
        Ok(self.push(Tensor::vector(out), Op::Sub { a, b }))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same_shape("mul", self.value(a), self.value(b))?;
        let out: Vec<f64> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .collect();
        Ok(self.push(Tensor::vector(out), Op::Mul { a, b }))
    }

    /// a*x + c, elementwise.
    pub fn scale_shift(&mut self, x: Var, a: f64, c: f64) -> Var {
        let out: Vec<f64> = self.value(x).data().iter().map(|&v| a * v + c).collect();
        self.push(Tensor::vector(out), Op::ScaleShift { x, a })
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let mut out = Vec::new();
        for &p in parts {
            out.extend_from_slice(self.value(p).data());
        }
        self.push(Tensor::vector(out), Op::Concat { parts: parts.to_vec() })
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same_shape("dot", self.value(a), self.value(b))?;
        let y: f64 = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .sum();
        Ok(self.push(Tensor::scalar(y), Op::Dot { a, b }))
    }

    pub fn l2_distance(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same_shape("l2_distance", self.value(a), self.value(b))?;
        let y = l2_distance_value(self.value(a).data(), self.value(b).data());
        Ok(self.push(Tensor::scalar(y), Op::L2Distance { a, b }))
    }

    pub fn l2_norm(&mut self, x: Var) -> Var {
        let y = self.value(x).data().iter().map(|v| v * v).sum::<f64>().sqrt();
        self.push(Tensor::scalar(y), Op::L2Norm { x })
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let y: f64 = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(y), Op::SumVec { x })
    }

    /// sum_l weights[l] * items[l]; every item has the same shape.
    pub fn weighted_sum(&mut self, weights: Var, items: &[Var]) -> Result<Var> {
        let wd = self.value(weights);
        if wd.len() != items.len() {
            return Err(Error::Config(format!(
                "weighted_sum: {} weights against {} items",
                wd.len(),
                items.len()
            )));
        }
        if items.is_empty() {
            return Err(Error::Config("weighted_sum: empty item list".into()));
        }
        let dim = self.value(items[0]).len();
        let mut out = vec![0.0; dim];
        for (l, &it) in items.iter().enumerate() {
            check_same_shape("weighted_sum", self.value(items[0]), self.value(it))?;
            let w = self.value(weights).data()[l];
            for (o, v) in out.iter_mut().zip(self.value(it).data()) {
                *o += w * v;
            }
        }
        Ok(self.push(
            Tensor::vector(out),
            Op::WeightedSum { weights, items: items.to_vec() },
        ))
    }

    pub fn stack_scalars(&mut self, parts: &[Var]) -> Result<Var> {
        let mut out = Vec::with_capacity(parts.len());
        for &p in parts {
            out.push(self.scalar(p)?);
        }
        Ok(self.push(Tensor::vector(out), Op::StackScalars { parts: parts.to_vec() }))
    }

    pub fn index_scalar(&mut self, x: Var, idx: usize) -> Result<Var> {
        let xd = self.value(x);
        if idx >= xd.len() {
            return Err(Error::Contract(format!(
                "index {idx} out of bounds for length {}",
                xd.len()
            )));
        }
        let y = xd.data()[idx];
        Ok(self.push(Tensor::scalar(y), Op::IndexScalar { x, idx }))
    }

    pub fn log(&mut self, x: Var) -> Var {
        let out: Vec<f64> = self.value(x).data().iter().map(|&v| v.ln()).collect();
        self.push(Tensor::vector(out), Op::Log { x })
    }

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let out: Vec<f64> = self
            .value(x)
            .data()
            .iter()
            .map(|&v| v.max(lo).min(hi))
            .collect();
        self.push(Tensor::vector(out), Op::Clamp { x, lo, hi })
    }

    /// Scalar a/b, defined as 0 when b == 0 (the policy's zero-norm guard).
    pub fn div_guard(&mut self, a: Var, b: Var) -> Result<Var> {
        let av = self.scalar(a)?;
        let bv = self.scalar(b)?;
        let y = if bv == 0.0 { 0.0 } else { av / bv };
        Ok(self.push(Tensor::scalar(y), Op::DivGuard { a, b }))
    }

    /// Reverse sweep from a scalar root, accumulating into node grads and
    /// parameter grads. One sweep per tape; use `reset_grads` before reusing
    /// the tape with another root.
    pub fn backward(&mut self, root: Var, params: &mut ParamSet) -> Result<()> {
        if !self.recording {
            return Err(Error::Contract("backward on a forward-only tape".into()));
        }
        if !self.nodes[root.0].value.is_scalar() {
            return Err(Error::Contract(format!(
                "backward root must be scalar, got shape {:?}",
                self.nodes[root.0].value.shape()
            )));
        }
        self.nodes[root.0].grad = Some(Tensor::scalar(1.0));
        for i in (0..=root.0).rev() {
            if self.nodes[i].grad.is_none() {
                continue;
            }
            let grad = self.nodes[i].grad.as_ref().unwrap().clone();
            let op = self.nodes[i].op.clone();
            self.apply_backward(&op, i, grad.data(), params);
        }
        Ok(())
    }

    fn grad_buf(&mut self, v: Var) -> &mut Tensor {
        let shape = self.nodes[v.0].value.shape().to_vec();
        self.nodes[v.0].grad.get_or_insert_with(|| Tensor::zeros(shape))
    }

    fn add_grad(&mut self, v: Var, delta: &[f64]) {
        let buf = self.grad_buf(v);
        for (g, d) in buf.data_mut().iter_mut().zip(delta) {
            *g += d;
        }
    }

    fn apply_backward(&mut self, op: &Op, node: usize, dy: &[f64], params: &mut ParamSet) {
        match *op {
            Op::Input => {}
            Op::Affine { w, b, x } => {
                let (rows, cols) = {
                    let wt = params.value(w);
                    (wt.rows(), wt.cols())
                };
                // dW[r,c] += dy[r] * x[c]
                {
                    let xd = self.nodes[x.0].value.clone();
                    let gw = params.grad_mut(w).data_mut();
                    for r in 0..rows {
                        let row = &mut gw[r * cols..(r + 1) * cols];
                        let d = dy[r];
                        for (c, g) in row.iter_mut().enumerate() {
                            *g += d * xd.data()[c];
                        }
                    }
                }
                if let Some(b) = b {
                    let gb = params.grad_mut(b).data_mut();
                    for (g, d) in gb.iter_mut().zip(dy) {
                        *g += d;
                    }
                }
                // dx[c] += sum_r W[r,c] * dy[r]
                let mut dx = vec![0.0; cols];
                {
                    let wd = params.value(w).data();
                    for r in 0..rows {
                        let row = &wd[r * cols..(r + 1) * cols];
                        let d = dy[r];
                        for c in 0..cols {
                            dx[c] += row[c] * d;
                        }
                    }
                }
                self.add_grad(x, &dx);
            }
            Op::OneHotCol { w, idx } => {
                let cols = params.value(w).cols();
                let gw = params.grad_mut(w).data_mut();
                for (r, d) in dy.iter().enumerate() {
                    gw[r * cols + idx] += d;
                }
            }
            Op::DotParam { w, x } => {
                let d = dy[0];
                {
                    let xd = self.nodes[x.0].value.clone();
                    let gw = params.grad_mut(w).data_mut();
                    for (g, v) in gw.iter_mut().zip(xd.data()) {
                        *g += d * v;
                    }
                }
                let dx: Vec<f64> = params.value(w).data().iter().map(|v| d * v).collect();
                self.add_grad(x, &dx);
            }
            Op::Sigmoid { x } => {
                let y = self.nodes[node].value.clone();
                let dx: Vec<f64> = y
                    .data()
                    .iter()
                    .zip(dy)
                    .map(|(&s, d)| d * s * (1.0 - s))
                    .collect();
                self.add_grad(x, &dx);
            }
            Op::Tanh { x } => {
                let y = self.nodes[node].value.clone();
                let dx: Vec<f64> = y.data().iter().zip(dy).map(|(&t, d)| d * (1.0 - t * t)).collect();
                self.add_grad(x, &dx);
            }
            Op::Relu { x } => {
                let xv = self.nodes[x.0].value.clone();
                let dx: Vec<f64> = xv
                    .data()
                    .iter()
                    .zip(dy)
                    .map(|(&v, d)| if v > 0.0 { *d } else { 0.0 })
                    .collect();
                self.add_grad(x, &dx);
            }
            Op::SoftmaxMasked { x, ref mask } => {
                let y = self.nodes[node].value.clone();
                let keep = |i: usize| mask.as_ref().map_or(true, |m| m[i]);
                let s: f64 = y
                    .data()
                    .iter()
                    .zip(dy)
                    .enumerate()
                    .filter(|(i, _)| keep(*i))
                    .map(|(_, (&yi, d))| yi * d)
                    .sum();
                let dx: Vec<f64> = y
                    .data()
                    .iter()
                    .zip(dy)
                    .enumerate()
                    .map(|(i, (&yi, d))| if keep(i) { yi * (d - s) } else { 0.0 })
                    .collect();
                self.add_grad(x, &dx);
            }
            Op::LogSoftmax { x } => {
                let y = self.nodes[node].value.clone();
                let s: f64 = dy.iter().sum();
                let dx: Vec<f64> = y.data().iter().zip(dy).map(|(&ly, d)| d - ly.exp() * s).collect();
                self.add_grad(x, &dx);
            }
            Op::Add { a, b } => {
                self.add_grad(a, dy);
                self.add_grad(b, dy);
            }
            Op::Sub { a, b } => {
                self.add_grad(a, dy);
                let neg: Vec<f64> = dy.iter().map(|d| -d).collect();
                self.add_grad(b, &neg);
            }
            Op::Mul { a, b } => {
                let av = self.nodes[a.0].value.clone();
                let bv = self.nodes[b.0].value.clone();
                let da: Vec<f64> = bv.data().iter().zip(dy).map(|(&v, d)| v * d).collect();
                let db: Vec<f64> = av.data().iter().zip(dy).map(|(&v, d)| v * d).collect();
                self.add_grad(a, &da);
                self.add_grad(b, &db);
            }
            Op::ScaleShift { x, a } => {
                let dx: Vec<f64> = dy.iter().map(|d| a * d).collect();
                self.add_grad(x, &dx);
            }
            Op::Concat { ref parts } => {
                let mut off = 0;
                for &p in parts {
                    let n = self.nodes[p.0].value.len();
                    let slice: Vec<f64> = dy[off..off + n].to_vec();
                    self.add_grad(p, &slice);
                    off += n;
                }
            }
            Op::Dot { a, b } => {
                let d = dy[0];
                let av = self.nodes[a.0].value.clone();
                let bv = self.nodes[b.0].value.clone();
                let da: Vec<f64> = bv.data().iter().map(|v| d * v).collect();
                let db: Vec<f64> = av.data().iter().map(|v| d * v).collect();
                self.add_grad(a, &da);
                self.add_grad(b, &db);
            }
            Op::L2Distance { a, b } => {
                let d = dy[0];
                let av = self.nodes[a.0].value.clone();
                let bv = self.nodes[b.0].value.clone();
                let norm = l2_distance_value(av.data(), bv.data());
                if norm > 0.0 {
                    let da: Vec<f64> = av
                        .data()
                        .iter()
                        .zip(bv.data())
                        .map(|(&x, &y)| d * (x - y) / norm)
                        .collect();
                    let db: Vec<f64> = da.iter().map(|v| -v).collect();
                    self.add_grad(a, &da);
                    self.add_grad(b, &db);
                }
            }
            Op::L2Norm { x } => {
                let d = dy[0];
                let xv = self.nodes[x.0].value.clone();
                let norm = self.nodes[node].value.data()[0];
                if norm > 0.0 {
                    let dx: Vec<f64> = xv.data().iter().map(|&v| d * v / norm).collect();
                    self.add_grad(x, &dx);
                }
            }
            Op::SumVec { x } => {
                let n = self.nodes[x.0].value.len();
                let dx = vec![dy[0]; n];
                self.add_grad(x, &dx);
            }
            Op::WeightedSum { weights, ref items } => {
                let wv = self.nodes[weights.0].value.clone();
                let mut dw = vec![0.0; items.len()];
                for (l, &it) in items.iter().enumerate() {
                    let iv = self.nodes[it.0].value.clone();
                    dw[l] = iv.data().iter().zip(dy).map(|(&v, d)| v * d).sum();
                    let di: Vec<f64> = dy.iter().map(|d| wv.data()[l] * d).collect();
                    self.add_grad(it, &di);
                }
                self.add_grad(weights, &dw);
            }
            Op::StackScalars { ref parts } => {
                for (l, &p) in parts.iter().enumerate() {
                    self.add_grad(p, &[dy[l]]);
                }
            }
            Op::IndexScalar { x, idx } => {
                let n = self.nodes[x.0].value.len();
                let mut dx = vec![0.0; n];
                dx[idx] = dy[0];
                self.add_grad(x, &dx);
            }
            Op::Log { x } => {
                let xv = self.nodes[x.0].value.clone();
                let dx: Vec<f64> = xv.data().iter().zip(dy).map(|(&v, d)| d / v).collect();
                self.add_grad(x, &dx);
            }
            Op::Clamp { x, lo, hi } => {
                let xv = self.nodes[x.0].value.clone();
                let dx: Vec<f64> = xv
                    .data()
                    .iter()
                    .zip(dy)
                    .map(|(&v, d)| if v > lo && v < hi { *d } else { 0.0 })
                    .collect();
                self.add_grad(x, &dx);
            }
            Op::DivGuard { a, b } => {
                let d = dy[0];
                let bv = self.nodes[b.0].value.data()[0];
                if bv != 0.0 {
                    let av = self.nodes[a.0].value.data()[0];
                    self.add_grad(a, &[d / bv]);
                    self.add_grad(b, &[-d * av / (bv * bv)]);
                }
            }
        }
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn l2_distance_value(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
