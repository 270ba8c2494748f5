//! Tape-based reverse-mode differentiation.
//!
//! Every operation appends a node holding its value and the handles of its
//! inputs. [`Graph::backward`] walks the tape in reverse and routes adjoints
//! to tracked inputs. Leaf gradients persist on the graph across calls, so two
//! backward passes without a reset accumulate.

use super::{Tensor, TensorError};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRow(Var, Var),
    Silu(Var),
    Gelu(Var),
    SoftmaxRows(Var),
    Concat(Vec<Var>),
    SliceCols(Var, usize),
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<f64>, rstd: Vec<f64> },
    Mse(Var, Var),
    Sum(Var),
    Mean(Var),
}

#[derive(Debug, Clone)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
    tracked: bool,
    grad: Option<Vec<f64>>,
}

/// One recorded computation.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Pointwise operations accepted by [`Graph::elementwise`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Elementwise {
    Add,
    Sub,
    Mul,
    Scale(f64),
    Silu,
    GeluApprox,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let inner = GELU_C * (x + 0.044715 * x * x * x);
    let th = inner.tanh();
    let dinner = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * dinner
}

/// `c[m×n] += a[m×k] · b[k×n]`
fn mm_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let ci = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let bp = &b[p * n..(p + 1) * n];
            for (cv, bv) in ci.iter_mut().zip(bp) {
                *cv += aip * bv;
            }
        }
    }
}

/// `c[m×k] += a[m×n] · b[k×n]ᵀ`
fn mm_nt_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, n: usize, k: usize) {
    for i in 0..m {
        let ai = &a[i * n..(i + 1) * n];
        for j in 0..k {
            let bj = &b[j * n..(j + 1) * n];
            c[i * k + j] += ai.iter().zip(bj).map(|(x, y)| x * y).sum::<f64>();
        }
    }
}

/// `c[k×n] += a[m×k]ᵀ · b[m×n]`
fn mm_tn_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let bi = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let cp = &mut c[p * n..(p + 1) * n];
            for (cv, bv) in cp.iter_mut().zip(bi) {
                *cv += aip * bv;
            }
        }
    }
}

fn dims2(shape: &[usize]) -> Result<(usize, usize), TensorError> {
    match shape {
        [r, c] => Ok((*r, *c)),
        [c] => Ok((1, *c)),
        other => Err(TensorError::Shape(format!("expected a matrix, got shape {other:?}"))),
    }
}

fn add_into(dst: &mut Option<Vec<f64>>, src: &[f64]) {
    match dst {
        Some(d) => d.iter_mut().zip(src).for_each(|(a, b)| *a += b),
        None => *dst = Some(src.to_vec()),
    }
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

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, tracked: bool) -> Var {
        self.nodes.push(Node { shape, value, op, tracked, grad: None });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    /// Records `t` as a leaf; it receives a gradient iff `t.requires_grad()`.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push(t.shape().to_vec(), t.values().to_vec(), Op::Leaf, t.requires_grad())
    }

    /// Records a trainable leaf regardless of the tensor's flag.
    pub fn param(&mut self, t: &Tensor) -> Var {
        self.push(t.shape().to_vec(), t.values().to_vec(), Op::Leaf, true)
    }

    /// Records an owned, untracked leaf.
    pub fn constant(&mut self, t: Tensor) -> Var {
        let shape = t.shape().to_vec();
        self.push(shape, t.into_values(), Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.node(v).value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.node(v).shape
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        let n = self.node(v);
        Tensor::new(n.shape.clone(), n.value.clone())
            .unwrap_or_else(|_| Tensor::zeros(&n.shape).map(|_| f64::NAN))
    }

    /// Scalar value of a single-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.node(v).value[0]
    }

    /// Accumulated gradient of a tracked leaf, once `backward` has run.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.node(v).grad.as_deref()
    }

    /// Adds the leaf gradient of `v` into `target.grad`.
    pub fn accumulate_into(&self, v: Var, target: &mut Tensor) -> Result<(), TensorError> {
        match self.grad(v) {
            Some(g) => target.accumulate_grad(g),
            None => Ok(()),
        }
    }

    pub fn zero_grads(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    pub fn elementwise(&mut self, op: Elementwise, args: &[Var]) -> Result<Var, TensorError> {
        let arg = |i: usize| {
            args.get(i)
                .copied()
                .ok_or_else(|| TensorError::Contract(format!("{op:?} needs {} operand(s)", i + 1)))
        };
        match op {
            Elementwise::Add => self.add(arg(0)?, arg(1)?),
            Elementwise::Sub => self.sub(arg(0)?, arg(1)?),
            Elementwise::Mul => self.mul(arg(0)?, arg(1)?),
            Elementwise::Scale(s) => Ok(self.scale(arg(0)?, s)),
            Elementwise::Silu => Ok(self.silu(arg(0)?)),
            Elementwise::GeluApprox => Ok(self.gelu(arg(0)?)),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (m, k) = dims2(self.shape(a))?;
        let (k2, n) = dims2(self.shape(b))?;
        if k != k2 {
            return Err(TensorError::Shape(format!("matmul {m}×{k} by {k2}×{n}")));
        }
        let mut out = vec![0.0; m * n];
        mm_acc(self.value(a), self.value(b), &mut out, m, k, n);
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(vec![m, n], out, Op::MatMul(a, b), tracked))
    }

    /// `a · bᵀ` for `a: m×n`, `b: k×n`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (m, n) = dims2(self.shape(a))?;
        let (k, n2) = dims2(self.shape(b))?;
        if n != n2 {
            return Err(TensorError::Shape(format!("matmul_nt {m}×{n} by ({k}×{n2})ᵀ")));
        }
        let mut out = vec![0.0; m * k];
        mm_nt_acc(self.value(a), self.value(b), &mut out, m, n, k);
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(vec![m, k], out, Op::MatMulNt(a, b), tracked))
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var, TensorError> {
        if self.shape(a) != self.shape(b) {
            return Err(TensorError::Shape(format!(
                "elementwise {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let out: Vec<f64> = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| f(x, y)).collect();
        let tracked = self.tracked(a) || self.tracked(b);
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, out, op, tracked))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out = self.value(a).iter().map(|&x| f(x)).collect();
        let tracked = self.tracked(a);
        let shape = self.shape(a).to_vec();
        self.push(shape, out, op, tracked)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, |x| x * s, Op::Scale(a, s))
    }

    pub fn silu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * sigmoid(x), Op::Silu(a))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        self.unary(a, gelu, Op::Gelu(a))
    }

    /// Adds a length-`n` bias to every row of an `m×n` matrix.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var, TensorError> {
        let (m, n) = dims2(self.shape(x))?;
        let (br, bn) = dims2(self.shape(bias))?;
        if br != 1 || bn != n {
            return Err(TensorError::Shape(format!("bias {:?} for {m}×{n}", self.shape(bias))));
        }
        let b = self.value(bias);
        let out: Vec<f64> = self.value(x).iter().enumerate().map(|(i, v)| v + b[i % n]).collect();
        let tracked = self.tracked(x) || self.tracked(bias);
        Ok(self.push(vec![m, n], out, Op::AddRow(x, bias), tracked))
    }

    pub fn softmax_rows(&mut self, x: Var) -> Result<Var, TensorError> {
        let (m, n) = dims2(self.shape(x))?;
        let xs = self.value(x);
        let mut out = vec![0.0; m * n];
        for r in 0..m {
            let row = &xs[r * n..(r + 1) * n];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let o = &mut out[r * n..(r + 1) * n];
            let mut total = 0.0;
            for (ov, &v) in o.iter_mut().zip(row) {
                *ov = (v - max).exp();
                total += *ov;
            }
            o.iter_mut().for_each(|v| *v /= total);
        }
        let tracked = self.tracked(x);
        Ok(self.push(vec![m, n], out, Op::SoftmaxRows(x), tracked))
    }

    /// Channel-wise concatenation of matrices sharing a row count.
    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let first = parts.first().ok_or_else(|| TensorError::Shape("concat of zero parts".into()))?;
        let (rows, _) = dims2(self.shape(*first))?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = dims2(self.shape(p))?;
            if r != rows {
                return Err(TensorError::Shape(format!("concat rows {r} vs {rows}")));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p)[r * w..(r + 1) * w]);
            }
        }
        let tracked = parts.iter().any(|&p| self.tracked(p));
        Ok(self.push(vec![rows, total], out, Op::Concat(parts.to_vec()), tracked))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var, TensorError> {
        let (m, n) = dims2(self.shape(x))?;
        if start > end || end > n {
            return Err(TensorError::Shape(format!("column range {start}..{end} of {n}")));
        }
        let w = end - start;
        let xs = self.value(x);
        let mut out = Vec::with_capacity(m * w);
        for r in 0..m {
            out.extend_from_slice(&xs[r * n + start..r * n + end]);
        }
        let tracked = self.tracked(x);
        Ok(self.push(vec![m, w], out, Op::SliceCols(x, start), tracked))
    }

    /// Per-row normalization to zero mean and unit variance, then `gain ⊙ x̂ + bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var, TensorError> {
        let (m, d) = dims2(self.shape(x))?;
        if d == 0 {
            return Err(TensorError::Shape("layer_norm over zero channels".into()));
        }
        for (name, p) in [("gain", gain), ("bias", bias)] {
            let (r, c) = dims2(self.shape(p))?;
            if r != 1 || c != d {
                return Err(TensorError::Shape(format!("{name} {:?} for width {d}", self.shape(p))));
            }
        }
        let xs = self.value(x);
        let (g, b) = (self.value(gain), self.value(bias));
        let mut xhat = vec![0.0; m * d];
        let mut rstd = vec![0.0; m];
        let mut out = vec![0.0; m * d];
        for r in 0..m {
            let row = &xs[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let s = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            rstd[r] = s;
            for c in 0..d {
                let h = (row[c] - mean) * s;
                xhat[r * d + c] = h;
                out[r * d + c] = g[c] * h + b[c];
            }
        }
        let tracked = self.tracked(x) || self.tracked(gain) || self.tracked(bias);
        Ok(self.push(vec![m, d], out, Op::LayerNorm { x, gain, bias, xhat, rstd }, tracked))
    }

    /// Mean of squared differences.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var, TensorError> {
        if self.shape(pred) != self.shape(target) {
            return Err(TensorError::Shape(format!(
                "mse {:?} vs {:?}",
                self.shape(pred),
                self.shape(target)
            )));
        }
        let n = self.value(pred).len().max(1) as f64;
        let total: f64 =
            self.value(pred).iter().zip(self.value(target)).map(|(p, t)| (p - t) * (p - t)).sum();
        let tracked = self.tracked(pred) || self.tracked(target);
        Ok(self.push(vec![1], vec![total / n], Op::Mse(pred, target), tracked))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().sum();
        let tracked = self.tracked(x);
        self.push(vec![1], vec![s], Op::Sum(x), tracked)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).len().max(1) as f64;
        let s = self.value(x).iter().sum::<f64>() / n;
        let tracked = self.tracked(x);
        self.push(vec![1], vec![s], Op::Mean(x), tracked)
    }

    /// Back-propagates from a scalar `loss`, adding into every tracked leaf's gradient.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        if self.node(loss).value.len() != 1 {
            return Err(TensorError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.node(loss).shape
            )));
        }
        if !self.node(loss).value[0].is_finite() {
            return Err(TensorError::NonFinite("loss".into()));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(dy) = adj[idx].take() else { continue };
            if !self.nodes[idx].tracked {
                continue;
            }
            let op = self.nodes[idx].op.clone();
            match op {
                Op::Leaf => {
                    add_into(&mut self.nodes[idx].grad, &dy);
                }
                Op::MatMul(a, b) => {
                    let (m, k) = dims2(self.shape(a))?;
                    let (_, n) = dims2(self.shape(b))?;
                    if self.tracked(a) {
                        let mut da = vec![0.0; m * k];
                        mm_nt_acc(&dy, self.value(b), &mut da, m, n, k);
                        add_into(&mut adj[a.0], &da);
                    }
                    if self.tracked(b) {
                        let mut db = vec![0.0; k * n];
                        mm_tn_acc(self.value(a), &dy, &mut db, m, k, n);
                        add_into(&mut adj[b.0], &db);
                    }
                }
                Op::MatMulNt(a, b) => {
                    let (m, n) = dims2(self.shape(a))?;
                    let (k, _) = dims2(self.shape(b))?;
                    if self.tracked(a) {
                        let mut da = vec![0.0; m * n];
                        mm_acc(&dy, self.value(b), &mut da, m, k, n);
                        add_into(&mut adj[a.0], &da);
                    }
                    if self.tracked(b) {
                        let mut db = vec![0.0; k * n];
                        mm_tn_acc(&dy, self.value(a), &mut db, m, k, n);
                        add_into(&mut adj[b.0], &db);
                    }
                }
                Op::Add(a, b) => {
                    if self.tracked(a) {
                        add_into(&mut adj[a.0], &dy);
                    }
                    if self.tracked(b) {
                        add_into(&mut adj[b.0], &dy);
                    }
                }
                Op::Sub(a, b) => {
                    if self.tracked(a) {
                        add_into(&mut adj[a.0], &dy);
                    }
                    if self.tracked(b) {
                        let neg: Vec<f64> = dy.iter().map(|v| -v).collect();
                        add_into(&mut adj[b.0], &neg);
                    }
                }
                Op::Mul(a, b) => {
                    if self.tracked(a) {
                        let d: Vec<f64> = dy.iter().zip(self.value(b)).map(|(g, y)| g * y).collect();
                        add_into(&mut adj[a.0], &d);
                    }
                    if self.tracked(b) {
                        let d: Vec<f64> = dy.iter().zip(self.value(a)).map(|(g, x)| g * x).collect();
                        add_into(&mut adj[b.0], &d);
                    }
                }
                Op::Scale(a, s) => {
                    let d: Vec<f64> = dy.iter().map(|g| g * s).collect();
                    add_into(&mut adj[a.0], &d);
                }
                Op::AddRow(x, bias) => {
                    if self.tracked(x) {
                        add_into(&mut adj[x.0], &dy);
                    }
                    if self.tracked(bias) {
                        let n = self.value(bias).len();
                        let mut db = vec![0.0; n];
                        for (i, g) in dy.iter().enumerate() {
                            db[i % n] += g;
                        }
                        add_into(&mut adj[bias.0], &db);
                    }
                }
                Op::Silu(a) => {
                    let d: Vec<f64> = dy
                        .iter()
                        .zip(self.value(a))
                        .map(|(g, &x)| {
                            let s = sigmoid(x);
                            g * (s + x * s * (1.0 - s))
                        })
                        .collect();
                    add_into(&mut adj[a.0], &d);
                }
                Op::Gelu(a) => {
                    let d: Vec<f64> = dy.iter().zip(self.value(a)).map(|(g, &x)| g * gelu_grad(x)).collect();
                    add_into(&mut adj[a.0], &d);
                }
                Op::SoftmaxRows(x) => {
                    let (m, n) = dims2(self.shape(x))?;
                    let y = &self.nodes[idx].value;
                    let mut dx = vec![0.0; m * n];
                    for r in 0..m {
                        let yr = &y[r * n..(r + 1) * n];
                        let gr = &dy[r * n..(r + 1) * n];
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for c in 0..n {
                            dx[r * n + c] = yr[c] * (gr[c] - dot);
                        }
                    }
                    add_into(&mut adj[x.0], &dx);
                }
                Op::Concat(parts) => {
                    let rows = self.nodes[idx].shape[0];
                    let total = self.nodes[idx].shape[1];
                    let mut offset = 0;
                    for p in parts {
                        let w = dims2(self.shape(p))?.1;
                        if self.tracked(p) {
                            let mut dp = Vec::with_capacity(rows * w);
                            for r in 0..rows {
                                dp.extend_from_slice(&dy[r * total + offset..r * total + offset + w]);
                            }
                            add_into(&mut adj[p.0], &dp);
                        }
                        offset += w;
                    }
                }
                Op::SliceCols(x, start) => {
                    let (m, n) = dims2(self.shape(x))?;
                    let w = self.nodes[idx].shape[1];
                    let mut dx = vec![0.0; m * n];
                    for r in 0..m {
                        dx[r * n + start..r * n + start + w].copy_from_slice(&dy[r * w..(r + 1) * w]);
                    }
                    add_into(&mut adj[x.0], &dx);
                }
                Op::LayerNorm { x, gain, bias, xhat, rstd } => {
                    let (m, d) = dims2(self.shape(x))?;
                    let g = self.value(gain).to_vec();
                    if self.tracked(gain) {
                        let mut dg = vec![0.0; d];
                        for i in 0..m * d {
                            dg[i % d] += dy[i] * xhat[i];
                        }
                        add_into(&mut adj[gain.0], &dg);
                    }
                    if self.tracked(bias) {
                        let mut db = vec![0.0; d];
                        for i in 0..m * d {
                            db[i % d] += dy[i];
                        }
                        add_into(&mut adj[bias.0], &db);
                    }
                    if self.tracked(x) {
                        let mut dx = vec![0.0; m * d];
                        for r in 0..m {
                            let mut mean_dh = 0.0;
                            let mut mean_dh_h = 0.0;
                            for c in 0..d {
                                let dh = dy[r * d + c] * g[c];
                                mean_dh += dh;
                                mean_dh_h += dh * xhat[r * d + c];
                            }
                            mean_dh /= d as f64;
                            mean_dh_h /= d as f64;
                            for c in 0..d {
                                let dh = dy[r * d + c] * g[c];
                                dx[r * d + c] = rstd[r] * (dh - mean_dh - xhat[r * d + c] * mean_dh_h);
                            }
                        }
                        add_into(&mut adj[x.0], &dx);
                    }
                }
                Op::Mse(p, t) => {
                    let n = self.value(p).len().max(1) as f64;
                    let scale = 2.0 * dy[0] / n;
                    let diff: Vec<f64> =
                        self.value(p).iter().zip(self.value(t)).map(|(a, b)| scale * (a - b)).collect();
                    if self.tracked(p) {
                        add_into(&mut adj[p.0], &diff);
                    }
                    if self.tracked(t) {
                        let neg: Vec<f64> = diff.iter().map(|v| -v).collect();
                        add_into(&mut adj[t.0], &neg);
                    }
                }
                Op::Sum(x) => {
                    let d = vec![dy[0]; self.value(x).len()];
                    add_into(&mut adj[x.0], &d);
                }
                Op::Mean(x) => {
                    let n = self.value(x).len();
                    let d = vec![dy[0] / n.max(1) as f64; n];
                    add_into(&mut adj[x.0], &d);
                }
            }
        }
        Ok(())
    }
}
