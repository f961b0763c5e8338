//! Reverse-mode differentiation over a linear operation record.
//!
//! Every operation appends one node holding its output value. [`Tape::backward`]
//! walks the nodes in exact reverse order and accumulates gradients additively, so
//! replaying the same tape always produces bitwise-identical gradients.

use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Pointwise and column-wise nonlinearities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
    Sigmoid,
    /// Softmax over each column independently.
    SoftmaxColumns,
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::SoftmaxColumns => "softmax",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone)]
enum Op<S> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddColumn(Var, Var),
    Scale(Var, S),
    Activate(Var, Activation),
    ConcatRows(Var, Var),
    SliceRows(Var, usize),
    HStack(Vec<Var>),
    Transpose(Var),
    SqrtFloor(Var, S),
    NormalizeColumns(Var),
    Sum(Var),
    AngularMarginXent(AngularMarginXent<S>),
}

#[derive(Debug, Clone)]
struct AngularMarginXent<S> {
    cosines: Var,
    label: usize,
    scale: S,
    margin: S,
    probs: Vec<S>,
}

/// Cosines of the target class are clamped this far inside `[-1, 1]` before the
/// margin is applied.
pub const COSINE_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone)]
struct Node<S> {
    op: Op<S>,
    value: Tensor<S>,
}

/// Linear record of executed operations.
///
/// A tape is single-threaded; build one per worker.
#[derive(Debug, Clone, Default)]
pub struct Tape<S> {
    nodes: Vec<Node<S>>,
    check_finite: bool,
}

/// Gradients produced by one backward pass, indexed by [`Var`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<S> {
    grads: Vec<Option<Tensor<S>>>,
}

impl<S: Scalar> Gradients<S> {
    /// Gradient for `var`, or `None` when the loss does not depend on it.
    pub fn get(&self, var: Var) -> Option<&Tensor<S>> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor<S>> {
        self.grads.get_mut(var.0).and_then(|g| g.take())
    }
}

fn dim_err(op: &str, a: &[usize], b: &[usize]) -> Error {
    Error::Dimension(format!("{op}: incompatible shapes {a:?} and {b:?}"))
}

/// `out[m x n] = a[m x k] * b[k x n]`
pub(crate) fn gemm<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    let mut out = vec![S::zero(); m * n];
    if n == 1 {
        for (i, o) in out.iter_mut().enumerate() {
            *o = a[i * k..(i + 1) * k].iter().zip(b).map(|(&x, &y)| x * y).sum();
        }
        return out;
    }
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == S::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `out[k x n] = a^T * g` where `a` is `m x k` and `g` is `m x n`.
fn gemm_tn<S: Scalar>(a: &[S], g: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    let mut out = vec![S::zero(); k * n];
    if n == 1 {
        for (i, &gv) in g.iter().enumerate() {
            for (o, &av) in out.iter_mut().zip(&a[i * k..(i + 1) * k]) {
                *o += av * gv;
            }
        }
        return out;
    }
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &gv) in orow.iter_mut().zip(grow) {
                *o += av * gv;
            }
        }
    }
    out
}

/// `out[m x k] = g * b^T` where `g` is `m x n` and `b` is `k x n`.
fn gemm_nt<S: Scalar>(g: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    let mut out = vec![S::zero(); m * k];
    if n == 1 {
        for (i, &gv) in g.iter().enumerate() {
            for (o, &bv) in out[i * k..(i + 1) * k].iter_mut().zip(b) {
                *o = gv * bv;
            }
        }
        return out;
    }
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            out[i * k + p] = grow.iter().zip(brow).map(|(&x, &y)| x * y).sum();
        }
    }
    out
}

fn transpose_data<S: Scalar>(data: &[S], rows: usize, cols: usize) -> Vec<S> {
    let mut out = vec![S::zero(); rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = data[r * cols + c];
        }
    }
    out
}

fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

fn softmax_columns<S: Scalar>(data: &[S], rows: usize, cols: usize) -> Vec<S> {
    let mut out = vec![S::zero(); rows * cols];
    for c in 0..cols {
        let max = (0..rows)
            .map(|r| data[r * cols + c])
            .fold(S::neg_infinity(), S::max);
        let mut total = S::zero();
        for r in 0..rows {
            let e = (data[r * cols + c] - max).exp();
            out[r * cols + c] = e;
            total += e;
        }
        for r in 0..rows {
            out[r * cols + c] /= total;
        }
    }
    out
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            check_finite: false,
        }
    }

    /// Tape that verifies every operation output is finite.
    pub fn checked() -> Self {
        Tape {
            nodes: Vec::new(),
            check_finite: true,
        }
    }

    pub fn set_check_finite(&mut self, on: bool) {
        self.check_finite = on;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn dims(&self, v: Var) -> Result<(usize, usize)> {
        self.nodes[v.0].value.dims2()
    }

    fn push(&mut self, op: Op<S>, value: Tensor<S>, name: &str) -> Result<Var> {
        if self.check_finite && !value.is_finite() {
            return Err(Error::NonFinite(name.to_string()));
        }
        self.nodes.push(Node { op, value });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Records an input or parameter.
    pub fn leaf(&mut self, value: Tensor<S>) -> Var {
        self.nodes.push(Node {
            op: Op::Leaf,
            value,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims(a)?;
        let (k2, n) = self.dims(b)?;
        if k != k2 {
            return Err(dim_err("matmul", self.shape(a), self.shape(b)));
        }
        let out = gemm(self.value(a).data(), self.value(b).data(), m, k, n);
        self.push(Op::MatMul(a, b), Tensor::from_parts(vec![m, n], out), "matmul")
    }

    fn zip_same(&mut self, a: Var, b: Var, name: &str, f: impl Fn(S, S) -> S) -> Result<Tensor<S>> {
        if self.shape(a) != self.shape(b) {
            return Err(dim_err(name, self.shape(a), self.shape(b)));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Ok(Tensor::from_parts(self.shape(a).to_vec(), data))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same(a, b, "add", |x, y| x + y)?;
        self.push(Op::Add(a, b), out, "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same(a, b, "sub", |x, y| x - y)?;
        self.push(Op::Sub(a, b), out, "sub")
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same(a, b, "mul", |x, y| x * y)?;
        self.push(Op::Mul(a, b), out, "mul")
    }

    /// Adds an `m x 1` column to every column of an `m x n` matrix.
    pub fn add_column(&mut self, a: Var, column: Var) -> Result<Var> {
        let (m, n) = self.dims(a)?;
        let (cm, cn) = self.dims(column)?;
        if cm != m || cn != 1 {
            return Err(dim_err("add_column", self.shape(a), self.shape(column)));
        }
        let col = self.value(column).data();
        let mut data = self.value(a).data().to_vec();
        for r in 0..m {
            for v in &mut data[r * n..(r + 1) * n] {
                *v += col[r];
            }
        }
        self.push(
            Op::AddColumn(a, column),
            Tensor::from_parts(vec![m, n], data),
            "add_column",
        )
    }

    pub fn scale(&mut self, a: Var, factor: S) -> Result<Var> {
        let out = self.value(a).map(|v| v * factor);
        self.push(Op::Scale(a, factor), out, "scale")
    }

    pub fn activation(&mut self, a: Var, kind: Activation) -> Result<Var> {
        let x = self.value(a);
        let out = match kind {
            Activation::Tanh => x.map(S::tanh),
            Activation::Relu => x.map(|v| if v > S::zero() { v } else { S::zero() }),
            Activation::Sigmoid => x.map(sigmoid),
            Activation::SoftmaxColumns => {
                let (r, c) = x.dims2()?;
                Tensor::from_parts(vec![r, c], softmax_columns(x.data(), r, c))
            }
        };
        self.push(Op::Activate(a, kind), out, &kind.to_string())
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.activation(a, Activation::Tanh)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.activation(a, Activation::Relu)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.activation(a, Activation::Sigmoid)
    }

    pub fn softmax_columns(&mut self, a: Var) -> Result<Var> {
        self.activation(a, Activation::SoftmaxColumns)
    }

    /// Vertical stack of a `p x L` and a `q x L` matrix.
    pub fn concat_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let (p, l) = self.dims(a)?;
        let (q, l2) = self.dims(b)?;
        if l != l2 {
            return Err(dim_err("concat_rows", self.shape(a), self.shape(b)));
        }
        let mut data = Vec::with_capacity((p + q) * l);
        data.extend_from_slice(self.value(a).data());
        data.extend_from_slice(self.value(b).data());
        self.push(
            Op::ConcatRows(a, b),
            Tensor::from_parts(vec![p + q, l], data),
            "concat_rows",
        )
    }

    /// Rows `start..start + len`.
    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.dims(a)?;
        if start + len > m {
            return Err(Error::Dimension(format!(
                "slice_rows {start}..{} out of range for {m} rows",
                start + len
            )));
        }
        let data = self.value(a).data()[start * n..(start + len) * n].to_vec();
        self.push(
            Op::SliceRows(a, start),
            Tensor::from_parts(vec![len, n], data),
            "slice_rows",
        )
    }

    /// Column `index` as an `m x 1` matrix.
    pub fn column(&mut self, a: Var, index: usize) -> Result<Var> {
        let (_, n) = self.dims(a)?;
        if index >= n {
            return Err(Error::Dimension(format!(
                "column {index} out of range for {n} columns"
            )));
        }
        // Transposed slice keeps the op set small.
        let t = self.transpose(a)?;
        let row = self.slice_rows(t, index, 1)?;
        self.transpose(row)
    }

    /// Horizontal stack of matrices with equal row counts.
    pub fn hstack(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Dimension("hstack of zero parts".into()))?;
        let (m, _) = self.dims(first)?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (pm, pn) = self.dims(p)?;
            if pm != m {
                return Err(dim_err("hstack", self.shape(first), self.shape(p)));
            }
            widths.push(pn);
        }
        let n: usize = widths.iter().sum();
        let mut data = vec![S::zero(); m * n];
        let mut offset = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let src = self.value(p).data();
            for r in 0..m {
                data[r * n + offset..r * n + offset + w].copy_from_slice(&src[r * w..(r + 1) * w]);
            }
            offset += w;
        }
        self.push(
            Op::HStack(parts.to_vec()),
            Tensor::from_parts(vec![m, n], data),
            "hstack",
        )
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.dims(a)?;
        let data = transpose_data(self.value(a).data(), m, n);
        self.push(Op::Transpose(a), Tensor::from_parts(vec![n, m], data), "transpose")
    }

    /// `sqrt(max(x, floor))` elementwise.
    pub fn sqrt_floor(&mut self, a: Var, floor: S) -> Result<Var> {
        let out = self.value(a).map(|v| v.max(floor).sqrt());
        self.push(Op::SqrtFloor(a, floor), out, "sqrt_floor")
    }

    /// Scales every column to unit Euclidean norm.
    pub fn normalize_columns(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.dims(a)?;
        let x = self.value(a).data();
        let mut data = x.to_vec();
        for c in 0..n {
            let norm = (0..m).map(|r| x[r * n + c] * x[r * n + c]).sum::<S>().sqrt();
            if norm == S::zero() {
                return Err(Error::Normalization(format!("column {c}")));
            }
            for r in 0..m {
                data[r * n + c] /= norm;
            }
        }
        self.push(
            Op::NormalizeColumns(a),
            Tensor::from_parts(vec![m, n], data),
            "normalize_columns",
        )
    }

    /// Sum of all entries as a `1 x 1` matrix.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let total = self.value(a).data().iter().copied().sum();
        self.push(Op::Sum(a), Tensor::from_parts(vec![1, 1], vec![total]), "sum")
    }

    /// Softmax cross-entropy over `scale * cos(theta_j)` logits, with the target
    /// logit replaced by `scale * cos(theta_label + margin)`.
    ///
    /// `cosines` is an `N x 1` column of class cosines. Returns a `1 x 1` loss.
    pub fn angular_margin_xent(
        &mut self,
        cosines: Var,
        label: usize,
        scale: S,
        margin: S,
    ) -> Result<Var> {
        let (n, c) = self.dims(cosines)?;
        if c != 1 {
            return Err(Error::Dimension(format!(
                "angular margin loss expects an N x 1 column, got {:?}",
                self.shape(cosines)
            )));
        }
        if label >= n {
            return Err(Error::Input(format!("label {label} out of range for {n} classes")));
        }
        let cos = self.value(cosines).data();
        let mut logits: Vec<S> = cos.iter().map(|&v| scale * v).collect();
        logits[label] = scale * margin_cosine(cos[label], margin);
        let max = logits.iter().copied().fold(S::neg_infinity(), S::max);
        let exps: Vec<S> = logits.iter().map(|&z| (z - max).exp()).collect();
        let total: S = exps.iter().copied().sum();
        let loss = max + total.ln() - logits[label];
        let probs = exps.into_iter().map(|e| e / total).collect();
        self.push(
            Op::AngularMarginXent(AngularMarginXent {
                cosines,
                label,
                scale,
                margin,
                probs,
            }),
            Tensor::from_parts(vec![1, 1], vec![loss]),
            "angular_margin_xent",
        )
    }

    /// Reverse pass from `output`, seeded with ones (the gradient of its sum).
    pub fn backward(&self, output: Var) -> Result<Gradients<S>> {
        let mut grads: Vec<Option<Vec<S>>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(vec![S::one(); self.value(output).len()]);

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            for (input, contribution) in self.input_grads(node, &g)? {
                accumulate(&mut grads[input.0], contribution);
            }
            grads[idx] = Some(g);
        }

        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, node)| g.map(|g| Tensor::from_parts(node.value.shape().to_vec(), g)))
            .collect();
        Ok(Gradients { grads })
    }

    fn input_grads(&self, node: &Node<S>, g: &[S]) -> Result<Vec<(Var, Vec<S>)>> {
        let out = node.value.data();
        Ok(match &node.op {
            Op::Leaf => Vec::new(),
            Op::MatMul(a, b) => {
                let (m, k) = self.dims(*a)?;
                let (_, n) = self.dims(*b)?;
                let da = gemm_nt(g, self.value(*b).data(), m, k, n);
                let db = gemm_tn(self.value(*a).data(), g, m, k, n);
                vec![(*a, da), (*b, db)]
            }
            Op::Add(a, b) => vec![(*a, g.to_vec()), (*b, g.to_vec())],
            Op::Sub(a, b) => vec![(*a, g.to_vec()), (*b, g.iter().map(|&v| -v).collect())],
            Op::Mul(a, b) => {
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                let da = g.iter().zip(bv).map(|(&g, &b)| g * b).collect();
                let db = g.iter().zip(av).map(|(&g, &a)| g * a).collect();
                vec![(*a, da), (*b, db)]
            }
            Op::AddColumn(a, col) => {
                let (m, n) = self.dims(*a)?;
                let dcol = (0..m).map(|r| g[r * n..(r + 1) * n].iter().copied().sum()).collect();
                vec![(*a, g.to_vec()), (*col, dcol)]
            }
            Op::Scale(a, factor) => vec![(*a, g.iter().map(|&v| v * *factor).collect())],
            Op::Activate(a, kind) => {
                let da = match kind {
                    Activation::Tanh => g.iter().zip(out).map(|(&g, &y)| g * (S::one() - y * y)).collect(),
                    Activation::Sigmoid => g.iter().zip(out).map(|(&g, &y)| g * y * (S::one() - y)).collect(),
                    Activation::Relu => g
                        .iter()
                        .zip(self.value(*a).data())
                        .map(|(&g, &x)| if x > S::zero() { g } else { S::zero() })
                        .collect(),
                    Activation::SoftmaxColumns => {
                        let (m, n) = self.dims(*a)?;
                        let mut da = vec![S::zero(); m * n];
                        for c in 0..n {
                            let inner: S = (0..m).map(|r| out[r * n + c] * g[r * n + c]).sum();
                            for r in 0..m {
                                da[r * n + c] = out[r * n + c] * (g[r * n + c] - inner);
                            }
                        }
                        da
                    }
                };
                vec![(*a, da)]
            }
            Op::ConcatRows(a, b) => {
                let split = self.value(*a).len();
                vec![(*a, g[..split].to_vec()), (*b, g[split..].to_vec())]
            }
            Op::SliceRows(a, start) => {
                let (_, n) = self.dims(*a)?;
                let mut da = vec![S::zero(); self.value(*a).len()];
                da[start * n..start * n + g.len()].copy_from_slice(g);
                vec![(*a, da)]
            }
            Op::HStack(parts) => {
                let (m, n) = node.value.dims2()?;
                let mut offset = 0;
                let mut result = Vec::with_capacity(parts.len());
                for &p in parts {
                    let (_, w) = self.dims(p)?;
                    let mut dp = vec![S::zero(); m * w];
                    for r in 0..m {
                        dp[r * w..(r + 1) * w].copy_from_slice(&g[r * n + offset..r * n + offset + w]);
                    }
                    offset += w;
                    result.push((p, dp));
                }
                result
            }
            Op::Transpose(a) => {
                let (m, n) = self.dims(*a)?;
                vec![(*a, transpose_data(g, n, m))]
            }
            Op::SqrtFloor(a, floor) => {
                let da = g
                    .iter()
                    .zip(self.value(*a).data())
                    .zip(out)
                    .map(|((&g, &x), &y)| {
                        if x > *floor {
                            g / (S::of(2.0) * y)
                        } else {
                            S::zero()
                        }
                    })
                    .collect();
                vec![(*a, da)]
            }
            Op::NormalizeColumns(a) => {
                let (m, n) = self.dims(*a)?;
                let x = self.value(*a).data();
                let mut da = vec![S::zero(); m * n];
                for c in 0..n {
                    let norm = (0..m).map(|r| x[r * n + c] * x[r * n + c]).sum::<S>().sqrt();
                    let inner: S = (0..m).map(|r| out[r * n + c] * g[r * n + c]).sum();
                    for r in 0..m {
                        da[r * n + c] = (g[r * n + c] - out[r * n + c] * inner) / norm;
                    }
                }
                vec![(*a, da)]
            }
            Op::Sum(a) => vec![(*a, vec![g[0]; self.value(*a).len()])],
            Op::AngularMarginXent(x) => {
                let cos = self.value(x.cosines).data();
                let upstream = g[0];
                let mut dc: Vec<S> = x
                    .probs
                    .iter()
                    .map(|&p| upstream * x.scale * p)
                    .collect();
                let dz_target = upstream * (x.probs[x.label] - S::one());
                dc[x.label] = dz_target * x.scale * margin_cosine_slope(cos[x.label], x.margin);
                vec![(x.cosines, dc)]
            }
        })
    }
}

/// `cos(theta + margin)` given `cos(theta)`.
///
/// With a zero margin the cosine passes through untouched; otherwise it is clamped
/// by [`COSINE_CLAMP`] so the sine term stays differentiable.
pub fn margin_cosine<S: Scalar>(cos: S, margin: S) -> S {
    if margin == S::zero() {
        return cos;
    }
    let c = clamp_cosine(cos);
    let sin = (S::one() - c * c).sqrt();
    c * margin.cos() - sin * margin.sin()
}

fn clamp_cosine<S: Scalar>(cos: S) -> S {
    let bound = S::one() - S::of(COSINE_CLAMP);
    cos.max(-bound).min(bound)
}

fn margin_cosine_slope<S: Scalar>(cos: S, margin: S) -> S {
    if margin == S::zero() {
        return S::one();
    }
    let bound = S::one() - S::of(COSINE_CLAMP);
    if cos.abs() > bound {
        return S::zero();
    }
    let sin = (S::one() - cos * cos).sqrt();
    margin.cos() + cos / sin * margin.sin()
}

fn accumulate<S: Scalar>(slot: &mut Option<Vec<S>>, contribution: Vec<S>) {
    match slot {
        Some(existing) => {
            for (e, c) in existing.iter_mut().zip(contribution) {
                *e += c;
            }
        }
        None => *slot = Some(contribution),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Tensor<f64> {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn matmul_hand_example() {
        let mut tape = Tape::new();
        let a = tape.leaf(m(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let b = tape.leaf(m(&[&[5.0], &[6.0]]));
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c), &m(&[&[17.0], &[39.0]]));
    }

    #[test]
    fn matmul_identity_and_zero() {
        let a = m(&[&[1.5, -2.0], &[0.25, 4.0], &[3.0, 7.0]]);
        let mut tape = Tape::new();
        let i3 = tape.leaf(Tensor::identity(3));
        let av = tape.leaf(a.clone());
        let z = tape.leaf(Tensor::zeros(&[2, 5]));
        let ia = tape.matmul(i3, av).unwrap();
        assert_eq!(tape.value(ia), &a);
        let az = tape.matmul(av, z).unwrap();
        assert_eq!(tape.value(az), &Tensor::zeros(&[3, 5]));
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(Tensor::zeros(&[2, 3]));
        let b = tape.leaf(Tensor::zeros(&[2, 3]));
        let msg = tape.matmul(a, b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3] and [2, 3]"), "{msg}");
    }

    #[test]
    fn activations_basic_values() {
        let mut tape = Tape::new();
        let z = tape.leaf(Tensor::<f64>::zeros(&[2, 3]));
        let t = tape.tanh(z).unwrap();
        assert_eq!(tape.value(t), &Tensor::zeros(&[2, 3]));

        let x = tape.leaf(Tensor::vector(vec![-1.0, 2.0]).unwrap());
        let r = tape.relu(x).unwrap();
        assert_eq!(tape.value(r).data(), &[0.0, 2.0]);

        let c = tape.leaf(Tensor::filled(&[4, 1], 3.7));
        let s = tape.softmax_columns(c).unwrap();
        assert_eq!(tape.value(s).data(), &[0.25; 4]);
    }

    #[test]
    fn concat_rows_cases() {
        let mut tape = Tape::new();
        let a = tape.leaf(m(&[&[1.0, 2.0]]));
        let empty = tape.leaf(Tensor::zeros(&[0, 2]));
        let c = tape.concat_rows(a, empty).unwrap();
        assert_eq!(tape.value(c), &m(&[&[1.0, 2.0]]));

        let p = tape.leaf(Tensor::zeros(&[2, 4]));
        let q = tape.leaf(Tensor::zeros(&[3, 4]));
        let pq = tape.concat_rows(p, q).unwrap();
        assert_eq!(tape.value(pq).shape(), &[5, 4]);

        let one = tape.leaf(m(&[&[1.0]]));
        let two = tape.leaf(m(&[&[2.0]]));
        let st = tape.concat_rows(one, two).unwrap();
        assert_eq!(tape.value(st), &m(&[&[1.0], &[2.0]]));

        let bad = tape.leaf(Tensor::zeros(&[1, 3]));
        assert!(matches!(tape.concat_rows(a, bad), Err(Error::Dimension(_))));
    }

    #[test]
    fn shared_input_accumulates() {
        // d/dx sum(x * x) = 2x via two uses of the same leaf.
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, -3.0]).unwrap());
        let sq = tape.mul(x, x).unwrap();
        let s = tape.sum(sq).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[2.0, -6.0]);
    }

    #[test]
    fn checked_tape_rejects_overflow() {
        let mut tape = Tape::<f64>::checked();
        let x = tape.leaf(Tensor::vector(vec![1e200]).unwrap());
        let y = tape.mul(x, x);
        assert!(matches!(y, Err(Error::NonFinite(_))));

        let mut loose = Tape::<f64>::new();
        let x = loose.leaf(Tensor::vector(vec![1e200]).unwrap());
        assert!(loose.mul(x, x).is_ok());
    }

    #[test]
    fn zero_norm_column_is_rejected() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::zeros(&[3, 1]));
        assert!(matches!(tape.normalize_columns(x), Err(Error::Normalization(_))));
    }

    #[test]
    fn unrelated_leaf_has_no_gradient() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::vector(vec![1.0]).unwrap());
        let y = tape.leaf(Tensor::vector(vec![2.0]).unwrap());
        let s = tape.sum(x).unwrap();
        let g = tape.backward(s).unwrap();
        assert!(g.get(y).is_none());
    }
}
