//! Reverse-mode tape over [`Tensor`] values.
//!
//! Every op evaluates eagerly and appends a node. Gradients are themselves
//! built out of tape ops ([`Tape::grad`]), so a gradient can be differentiated
//! again; the unrolled discriminator surrogate relies on this.
//! [`Tape::backward`] is the plain numeric path on top of it.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Bcast {
    Same,
    /// rhs has the lhs shape minus its leading (batch) dimension.
    Leading,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Const,
    MatMul { a: Var, b: Var, ta: bool, tb: bool },
    Add(Var, Var, Bcast),
    Sub(Var, Var, Bcast),
    Mul(Var, Var, Bcast),
    Neg(Var),
    Scale(Var, f64),
    AddScalar(Var),
    Tanh(Var),
    /// `g * (1 - y^2)`: the tanh vector-Jacobian product.
    TanhGrad { g: Var, y: Var },
    Relu(Var),
    LeakyRelu(Var, f64),
    Sigmoid(Var),
    /// `g * y * (1 - y)`: the sigmoid vector-Jacobian product.
    SigmoidGrad { g: Var, y: Var },
    LogSigmoid(Var),
    Square(Var),
    Sum(Var),
    /// Scalar broadcast to a full shape.
    Expand(Var),
    SumLeading(Var),
    BroadcastLeading(Var),
    ConcatCols(Var, Var),
    SliceCols { a: Var, start: usize },
    PadCols { a: Var, start: usize },
    Reshape(Var),
}

impl Op {
    fn inputs(&self) -> Inputs {
        match *self {
            Op::Leaf | Op::Const => Inputs::None,
            Op::MatMul { a, b, .. }
            | Op::Add(a, b, _)
            | Op::Sub(a, b, _)
            | Op::Mul(a, b, _)
            | Op::ConcatCols(a, b) => Inputs::Two(a, b),
            Op::TanhGrad { g, y } | Op::SigmoidGrad { g, y } => Inputs::Two(g, y),
            Op::Neg(a)
            | Op::Scale(a, _)
            | Op::AddScalar(a)
            | Op::Tanh(a)
            | Op::Relu(a)
            | Op::LeakyRelu(a, _)
            | Op::Sigmoid(a)
            | Op::LogSigmoid(a)
            | Op::Square(a)
            | Op::Sum(a)
            | Op::Expand(a)
            | Op::SumLeading(a)
            | Op::BroadcastLeading(a)
            | Op::SliceCols { a, .. }
            | Op::PadCols { a, .. }
            | Op::Reshape(a) => Inputs::One(a),
        }
    }
}

enum Inputs {
    None,
    One(Var),
    Two(Var, Var),
}

impl Inputs {
    fn any(&self, mut f: impl FnMut(Var) -> bool) -> bool {
        match *self {
            Inputs::None => false,
            Inputs::One(a) => f(a),
            Inputs::Two(a, b) => f(a) || f(b),
        }
    }
}

struct Node {
    op: Op,
    value: Tensor,
}

/// Append-only record of tensor ops. Node inputs always precede the node.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// `log σ(t) = -softplus(-t)`, finite for any finite `t`.
pub fn log_sigmoid(t: f64) -> f64 {
    -softplus(-t)
}

fn binary_bcast(op: &'static str, a: &Tensor, b: &Tensor) -> Result<Bcast> {
    if a.shape() == b.shape() {
        Ok(Bcast::Same)
    } else if a.ndim() >= 1 && &a.shape()[1..] == b.shape() {
        Ok(Bcast::Leading)
    } else {
        Err(Error::shape(op, a.shape(), b.shape()))
    }
}

fn apply_binary(a: &Tensor, b: &Tensor, mode: Bcast, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let bd = b.data();
    let data: Vec<f64> = match mode {
        Bcast::Same => a.data().iter().zip(bd).map(|(&x, &y)| f(x, y)).collect(),
        Bcast::Leading => {
            let w = bd.len();
            let mut out = Vec::with_capacity(a.len());
            if w > 0 {
                for row in a.data().chunks(w) {
                    out.extend(row.iter().zip(bd).map(|(&x, &y)| f(x, y)));
                }
            }
            out
        }
    };
    Tensor::new(a.shape().to_vec(), data).expect("binary op preserves lhs shape")
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
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

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, name: &'static str, op: Op, value: Tensor) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::NonFinite { op: name });
        }
        self.nodes.push(Node { op, value });
        Ok(Var(self.nodes.len() - 1))
    }

    /// A differentiable input.
    pub fn leaf(&mut self, value: Tensor) -> Result<Var> {
        self.push("leaf", Op::Leaf, value)
    }

    /// An input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.push("constant", Op::Const, value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_t(a, b, false, false)
    }

    /// `op(a) · op(b)`, where `ta`/`tb` transpose the respective operand.
    pub fn matmul_t(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Result<Var> {
        let value = Tensor::matmul_t(self.value(a), self.value(b), ta, tb)?;
        self.push("matmul", Op::MatMul { a, b, ta, tb }, value)
    }

    /// `x · wᵀ + bias` for `x: [n, in]`, `w: [out, in]`, `bias: [out]`.
    pub fn linear(&mut self, x: Var, w: Var, bias: Var) -> Result<Var> {
        let h = self.matmul_t(x, w, false, true)?;
        self.add(h, bias)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let mode = binary_bcast("add", self.value(a), self.value(b))?;
        let value = apply_binary(self.value(a), self.value(b), mode, |x, y| x + y);
        self.push("add", Op::Add(a, b, mode), value)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let mode = binary_bcast("sub", self.value(a), self.value(b))?;
        let value = apply_binary(self.value(a), self.value(b), mode, |x, y| x - y);
        self.push("sub", Op::Sub(a, b, mode), value)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let mode = binary_bcast("mul", self.value(a), self.value(b))?;
        let value = apply_binary(self.value(a), self.value(b), mode, |x, y| x * y);
        self.push("mul", Op::Mul(a, b, mode), value)
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(|x| -x);
        self.push("neg", Op::Neg(a), value)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let value = self.value(a).map(|x| c * x);
        self.push("scale", Op::Scale(a, c), value)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        let value = self.value(a).map(|x| x + c);
        self.push("add_scalar", Op::AddScalar(a), value)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(f64::tanh);
        self.push("tanh", Op::Tanh(a), value)
    }

    fn tanh_grad(&mut self, g: Var, y: Var) -> Result<Var> {
        let value = self.value(g).zip_map(self.value(y), "tanh_grad", |g, y| g * (1.0 - y * y))?;
        self.push("tanh_grad", Op::TanhGrad { g, y }, value)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(|x| x.max(0.0));
        self.push("relu", Op::Relu(a), value)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var> {
        let value = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        self.push("leaky_relu", Op::LeakyRelu(a, slope), value)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(sigmoid);
        self.push("sigmoid", Op::Sigmoid(a), value)
    }

    fn sigmoid_grad(&mut self, g: Var, y: Var) -> Result<Var> {
        let value = self
            .value(g)
            .zip_map(self.value(y), "sigmoid_grad", |g, y| g * y * (1.0 - y))?;
        self.push("sigmoid_grad", Op::SigmoidGrad { g, y }, value)
    }

    pub fn log_sigmoid(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(log_sigmoid);
        self.push("log_sigmoid", Op::LogSigmoid(a), value)
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(|x| x * x);
        self.push("square", Op::Square(a), value)
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let value = Tensor::scalar(self.value(a).sum());
        self.push("sum", Op::Sum(a), value)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).len();
        if n == 0 {
            return Err(Error::InvalidArgument("mean of an empty tensor".into()));
        }
        let s = self.sum(a)?;
        self.scale(s, 1.0 / n as f64)
    }

    /// `‖a - b‖²` summed over every element.
    pub fn squared_l2(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape("squared_l2", self.shape(a), self.shape(b)));
        }
        let d = self.sub(a, b)?;
        let sq = self.square(d)?;
        self.sum(sq)
    }

    fn expand(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(a).item()?;
        self.push("expand", Op::Expand(a), Tensor::full(shape, v))
    }

    /// Sums over the leading dimension: `[n, rest..] -> [rest..]`.
    pub fn sum_leading(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.ndim() == 0 {
            return Err(Error::shape("sum_leading", t.shape(), &[0]));
        }
        let rest = t.shape()[1..].to_vec();
        let w: usize = rest.iter().product();
        let mut out = vec![0.0; w];
        if w > 0 {
            for row in t.data().chunks(w) {
                for (o, &x) in out.iter_mut().zip(row) {
                    *o += x;
                }
            }
        }
        let value = Tensor::new(rest, out)?;
        self.push("sum_leading", Op::SumLeading(a), value)
    }

    /// Repeats `a` `n` times along a new leading dimension.
    pub fn broadcast_leading(&mut self, a: Var, n: usize) -> Result<Var> {
        let t = self.value(a);
        let mut shape = vec![n];
        shape.extend_from_slice(t.shape());
        let mut data = Vec::with_capacity(n * t.len());
        for _ in 0..n {
            data.extend_from_slice(t.data());
        }
        let value = Tensor::new(shape, data)?;
        self.push("broadcast_leading", Op::BroadcastLeading(a), value)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = Tensor::concat_cols(self.value(a), self.value(b))?;
        self.push("concat_cols", Op::ConcatCols(a, b), value)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let value = self.value(a).slice_cols(start, len)?;
        self.push("slice_cols", Op::SliceCols { a, start }, value)
    }

    /// Same data, new shape with the same element count.
    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).clone().reshape(shape.to_vec())?;
        self.push("reshape", Op::Reshape(a), value)
    }

    /// Embeds `a: [r, c]` into zeros of width `total` starting at column `start`.
    fn pad_cols(&mut self, a: Var, start: usize, total: usize) -> Result<Var> {
        let t = self.value(a);
        let (r, c) = t.dims2("pad_cols")?;
        if start + c > total {
            return Err(Error::shape("pad_cols", t.shape(), &[start, total]));
        }
        let mut out = vec![0.0; r * total];
        for i in 0..r {
            out[i * total + start..i * total + start + c].copy_from_slice(t.row(i));
        }
        let value = Tensor::new(vec![r, total], out)?;
        self.push("pad_cols", Op::PadCols { a, start }, value)
    }

    fn reduce_for(&mut self, g: Var, mode: Bcast) -> Result<Var> {
        match mode {
            Bcast::Same => Ok(g),
            Bcast::Leading => self.sum_leading(g),
        }
    }

    /// Records the gradient of scalar `loss` with respect to each of `wrt` as
    /// new tape nodes, so the result can itself be differentiated.
    ///
    /// Nodes that cannot reach any of `wrt` are skipped. An unreachable
    /// target gets a zero constant.
    pub fn grad(&mut self, loss: Var, wrt: &[Var]) -> Result<Vec<Var>> {
        if self.value(loss).len() != 1 {
            return Err(Error::NotScalar(self.shape(loss).to_vec()));
        }
        let end = loss.0 + 1;
        let mut needs = vec![false; end];
        for w in wrt {
            if w.0 < end {
                needs[w.0] = true;
            }
        }
        for i in 0..end {
            if !needs[i] {
                needs[i] = self.nodes[i].op.inputs().any(|v| needs[v.0]);
            }
        }

        let mut grads: Vec<Option<Var>> = vec![None; end];
        let seed = self.constant(Tensor::full(self.shape(loss), 1.0))?;
        grads[loss.0] = Some(seed);

        for i in (0..end).rev() {
            let Some(g) = grads[i] else { continue };
            if !needs[i] {
                continue;
            }
            let op = self.nodes[i].op.clone();
            let y = Var(i);
            let mut contrib: Vec<(Var, Var)> = Vec::with_capacity(2);
            macro_rules! want {
                ($v:expr) => {
                    needs[$v.0]
                };
            }
            match op {
                Op::Leaf | Op::Const => {}
                Op::MatMul { a, b, ta, tb } => {
                    if want!(a) {
                        let ga = if ta {
                            self.matmul_t(b, g, tb, true)?
                        } else {
                            self.matmul_t(g, b, false, !tb)?
                        };
                        contrib.push((a, ga));
                    }
                    if want!(b) {
                        let gb = if tb {
                            self.matmul_t(g, a, true, ta)?
                        } else {
                            self.matmul_t(a, g, !ta, false)?
                        };
                        contrib.push((b, gb));
                    }
                }
                Op::Add(a, b, mode) => {
                    if want!(a) {
                        contrib.push((a, g));
                    }
                    if want!(b) {
                        let gb = self.reduce_for(g, mode)?;
                        contrib.push((b, gb));
                    }
                }
                Op::Sub(a, b, mode) => {
                    if want!(a) {
                        contrib.push((a, g));
                    }
                    if want!(b) {
                        let r = self.reduce_for(g, mode)?;
                        let gb = self.neg(r)?;
                        contrib.push((b, gb));
                    }
                }
                Op::Mul(a, b, mode) => {
                    if want!(a) {
                        let ga = self.mul(g, b)?;
                        contrib.push((a, ga));
                    }
                    if want!(b) {
                        let p = self.mul(g, a)?;
                        let gb = self.reduce_for(p, mode)?;
                        contrib.push((b, gb));
                    }
                }
                Op::Neg(a) => {
                    let ga = self.neg(g)?;
                    contrib.push((a, ga));
                }
                Op::Scale(a, c) => {
                    let ga = self.scale(g, c)?;
                    contrib.push((a, ga));
                }
                Op::AddScalar(a) => contrib.push((a, g)),
                Op::Tanh(a) => {
                    let ga = self.tanh_grad(g, y)?;
                    contrib.push((a, ga));
                }
                Op::TanhGrad { g: g0, y: y0 } => {
                    if want!(g0) {
                        let d = self.tanh_grad(g, y0)?;
                        contrib.push((g0, d));
                    }
                    if want!(y0) {
                        let p = self.mul(g, g0)?;
                        let p = self.mul(p, y0)?;
                        let d = self.scale(p, -2.0)?;
                        contrib.push((y0, d));
                    }
                }
                Op::Relu(a) => {
                    let mask = self.value(a).map(|x| if x > 0.0 { 1.0 } else { 0.0 });
                    let m = self.constant(mask)?;
                    let ga = self.mul(g, m)?;
                    contrib.push((a, ga));
                }
                Op::LeakyRelu(a, slope) => {
                    let mask = self.value(a).map(|x| if x > 0.0 { 1.0 } else { slope });
                    let m = self.constant(mask)?;
                    let ga = self.mul(g, m)?;
                    contrib.push((a, ga));
                }
                Op::Sigmoid(a) => {
                    let ga = self.sigmoid_grad(g, y)?;
                    contrib.push((a, ga));
                }
                Op::SigmoidGrad { g: g0, y: y0 } => {
                    if want!(g0) {
                        let d = self.sigmoid_grad(g, y0)?;
                        contrib.push((g0, d));
                    }
                    if want!(y0) {
                        let p = self.mul(g, g0)?;
                        let s = self.scale(y0, -2.0)?;
                        let s = self.add_scalar(s, 1.0)?;
                        let d = self.mul(p, s)?;
                        contrib.push((y0, d));
                    }
                }
                Op::LogSigmoid(a) => {
                    let na = self.neg(a)?;
                    let s = self.sigmoid(na)?;
                    let ga = self.mul(g, s)?;
                    contrib.push((a, ga));
                }
                Op::Square(a) => {
                    let two_a = self.scale(a, 2.0)?;
                    let ga = self.mul(g, two_a)?;
                    contrib.push((a, ga));
                }
                Op::Sum(a) => {
                    let shape = self.shape(a).to_vec();
                    let ga = self.expand(g, &shape)?;
                    contrib.push((a, ga));
                }
                Op::Expand(a) => {
                    let s = self.sum(g)?;
                    // keep the input's own (scalar-like) shape
                    let shape = self.shape(a).to_vec();
                    let ga = if self.shape(s) == shape.as_slice() {
                        s
                    } else {
                        self.expand(s, &shape)?
                    };
                    contrib.push((a, ga));
                }
                Op::SumLeading(a) => {
                    let n = self.shape(a)[0];
                    let ga = self.broadcast_leading(g, n)?;
                    contrib.push((a, ga));
                }
                Op::BroadcastLeading(a) => {
                    let ga = self.sum_leading(g)?;
                    contrib.push((a, ga));
                }
                Op::ConcatCols(a, b) => {
                    let ac = self.shape(a)[1];
                    let bc = self.shape(b)[1];
                    if want!(a) {
                        let ga = self.slice_cols(g, 0, ac)?;
                        contrib.push((a, ga));
                    }
                    if want!(b) {
                        let gb = self.slice_cols(g, ac, bc)?;
                        contrib.push((b, gb));
                    }
                }
                Op::SliceCols { a, start } => {
                    let total = self.shape(a)[1];
                    let ga = self.pad_cols(g, start, total)?;
                    contrib.push((a, ga));
                }
                Op::PadCols { a, start } => {
                    let len = self.shape(a)[1];
                    let ga = self.slice_cols(g, start, len)?;
                    contrib.push((a, ga));
                }
                Op::Reshape(a) => {
                    let shape = self.shape(a).to_vec();
                    let ga = self.reshape(g, &shape)?;
                    contrib.push((a, ga));
                }
            }
            for (input, gi) in contrib {
                if !needs[input.0] {
                    continue;
                }
                grads[input.0] = Some(match grads[input.0] {
                    None => gi,
                    Some(prev) => self.add(prev, gi)?,
                });
            }
        }

        wrt.iter()
            .map(|&w| match grads.get(w.0).copied().flatten() {
                Some(g) => Ok(g),
                None => {
                    let zeros = Tensor::zeros(self.shape(w));
                    self.constant(zeros)
                }
            })
            .collect()
    }

    /// Numeric gradients of scalar `loss` with respect to `wrt`.
    pub fn backward(&mut self, loss: Var, wrt: &[Var]) -> Result<Vec<Tensor>> {
        let gs = self.grad(loss, wrt)?;
        Ok(gs.into_iter().map(|g| self.value(g).clone()).collect())
    }
}
