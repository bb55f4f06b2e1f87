use crate::error::{Error, Result};

use super::tensor::{broadcast_shape, broadcast_strides, gemm, visit_broadcast, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Sentinel gather index producing a zero.
pub const GATHER_PAD: usize = usize::MAX;

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MatMul(Var, Var),
    Exp(Var),
    Ln(Var),
    Softplus(Var),
    Silu(Var),
    Square(Var),
    Sqrt(Var),
    Recip(Var),
    Scale(Var, f64),
    AddScalar(Var),
    SumAll(Var),
    MeanAll(Var),
    SumAxis(Var, usize),
    Concat(Vec<Var>, usize),
    Slice {
        src: Var,
        axis: usize,
        start: usize,
    },
    Transpose(Var),
    Broadcast(Var),
    Reshape(Var),
    RmsNorm {
        src: Var,
        eps: f64,
    },
    Gather {
        src: Var,
        index: Vec<usize>,
    },
    PairwiseSqDist(Var, Var),
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Linear record of operations for reverse-mode differentiation.
///
/// Every op evaluates eagerly, stores its output, and checks it for
/// non-finite values. Nodes are appended in evaluation order, so the
/// node order is a topological order of the graph.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient for `v`, or `None` when `v` does not require gradients
    /// or does not influence the loss.
    pub fn get(&self, v: Var) -> Option<Tensor> {
        self.grads
            .get(v.0)
            .and_then(|g| g.as_ref())
            .map(|g| Tensor::new(self.shapes[v.0].clone(), g.clone()).expect("gradient shape"))
    }

    /// Gradient for `v`, zero-filled when absent.
    pub fn get_or_zero(&self, v: Var) -> Tensor {
        self.get(v)
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[v.0]))
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

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Trainable leaf.
    pub fn parameter(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Non-trainable leaf; never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn record(&mut self, name: &'static str, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NumericOverflow { op: name });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push(value, op, requires_grad))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let out_shape = broadcast_shape(name, va.shape(), vb.shape())?;
        let n: usize = out_shape.iter().product();
        let mut out = vec![0.0; n];
        if va.shape() == vb.shape() {
            for ((o, x), y) in out.iter_mut().zip(va.data()).zip(vb.data()) {
                *o = f(*x, *y);
            }
        } else {
            let sa = broadcast_strides(va.shape(), &out_shape);
            let sb = broadcast_strides(vb.shape(), &out_shape);
            let (da, db) = (va.data(), vb.data());
            visit_broadcast(&out_shape, &sa, &sb, |o, i, j| out[o] = f(da[i], db[j]));
        }
        let value = Tensor::new(out_shape, out)?;
        self.record(name, value, op, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product with broadcasting.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Matrix product of `[m, k]` and `[k, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (sa, sb) = (va.shape(), vb.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::Shape {
                op: "matmul",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, va.data(), false, vb.data(), false, &mut out, false);
        let value = Tensor::new(vec![m, n], out)?;
        self.record("matmul", value, Op::MatMul(a, b), &[a, b])
    }

    fn unary(&mut self, name: &'static str, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let va = &self.nodes[a.0].value;
        let data = va.data().iter().map(|&x| f(x)).collect();
        let value = Tensor::new(va.shape().to_vec(), data)?;
        self.record(name, value, op, &[a])
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary("exp", a, f64::exp, Op::Exp(a))
    }

    pub fn ln(&mut self, a: Var) -> Result<Var> {
        self.unary("ln", a, f64::ln, Op::Ln(a))
    }

    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        self.unary("softplus", a, softplus, Op::Softplus(a))
    }

    pub fn silu(&mut self, a: Var) -> Result<Var> {
        self.unary("silu", a, |x| x * sigmoid(x), Op::Silu(a))
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.unary("square", a, |x| x * x, Op::Square(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        self.unary("sqrt", a, f64::sqrt, Op::Sqrt(a))
    }

    pub fn recip(&mut self, a: Var) -> Result<Var> {
        self.unary("recip", a, |x| 1.0 / x, Op::Recip(a))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary("scale", a, |x| c * x, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary("add_scalar", a, |x| x + c, Op::AddScalar(a))
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.scale(a, -1.0)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.nodes[a.0].value.data().iter().sum();
        self.record("sum", Tensor::scalar(s), Op::SumAll(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let va = &self.nodes[a.0].value;
        if va.is_empty() {
            return Err(Error::Shape {
                op: "mean",
                lhs: va.shape().to_vec(),
                rhs: vec![],
            });
        }
        let s = va.data().iter().sum::<f64>() / va.len() as f64;
        self.record("mean", Tensor::scalar(s), Op::MeanAll(a), &[a])
    }

    /// Sum over one axis, removing it.
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let va = &self.nodes[a.0].value;
        let shape = va.shape();
        if axis >= shape.len() {
            return Err(Error::Shape {
                op: "sum_axis",
                lhs: shape.to_vec(),
                rhs: vec![axis],
            });
        }
        let outer: usize = shape[..axis].iter().product();
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let mut out = vec![0.0; outer * inner];
        let d = va.data();
        for o in 0..outer {
            for l in 0..len {
                let base = (o * len + l) * inner;
                let row = &mut out[o * inner..(o + 1) * inner];
                for (r, x) in row.iter_mut().zip(&d[base..base + inner]) {
                    *r += x;
                }
            }
        }
        let mut out_shape = shape.to_vec();
        out_shape.remove(axis);
        let value = Tensor::new(out_shape, out)?;
        self.record("sum_axis", value, Op::SumAxis(a, axis), &[a])
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts.first().ok_or(Error::Shape {
            op: "concat",
            lhs: vec![],
            rhs: vec![],
        })?;
        let base = self.nodes[first.0].value.shape().to_vec();
        if axis >= base.len() {
            return Err(Error::Shape {
                op: "concat",
                lhs: base,
                rhs: vec![axis],
            });
        }
        let mut total = 0;
        for p in parts {
            let s = self.nodes[p.0].value.shape();
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(Error::Shape {
                    op: "concat",
                    lhs: base,
                    rhs: s.to_vec(),
                });
            }
            total += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for p in parts {
                let v = &self.nodes[p.0].value;
                let chunk = v.shape()[axis] * inner;
                out.extend_from_slice(&v.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let value = Tensor::new(shape, out)?;
        self.record("concat", value, Op::Concat(parts.to_vec(), axis), parts)
    }

    /// Elements `start..end` along `axis`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, end: usize) -> Result<Var> {
        let va = &self.nodes[a.0].value;
        let shape = va.shape();
        if axis >= shape.len() || start > end || end > shape[axis] {
            return Err(Error::Shape {
                op: "slice",
                lhs: shape.to_vec(),
                rhs: vec![axis, start, end],
            });
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let len = shape[axis];
        let mut out = Vec::with_capacity(outer * (end - start) * inner);
        for o in 0..outer {
            let from = (o * len + start) * inner;
            let to = (o * len + end) * inner;
            out.extend_from_slice(&va.data()[from..to]);
        }
        let mut out_shape = shape.to_vec();
        out_shape[axis] = end - start;
        let value = Tensor::new(out_shape, out)?;
        self.record("slice", value, Op::Slice { src: a, axis, start }, &[a])
    }

    /// Transpose of a matrix.
    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let va = &self.nodes[a.0].value;
        let s = va.shape();
        if s.len() != 2 {
            return Err(Error::Shape {
                op: "transpose",
                lhs: s.to_vec(),
                rhs: vec![],
            });
        }
        let (r, c) = (s[0], s[1]);
        let d = va.data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = d[i * c + j];
            }
        }
        let value = Tensor::new(vec![c, r], out)?;
        self.record("transpose", value, Op::Transpose(a), &[a])
    }

    /// Explicit broadcast to `shape`.
    pub fn broadcast_to(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let va = &self.nodes[a.0].value;
        let out_shape = broadcast_shape("broadcast", va.shape(), shape)?;
        if out_shape != shape {
            return Err(Error::Shape {
                op: "broadcast",
                lhs: va.shape().to_vec(),
                rhs: shape.to_vec(),
            });
        }
        let n: usize = shape.iter().product();
        let mut out = vec![0.0; n];
        let sa = broadcast_strides(va.shape(), shape);
        let zeros = vec![0; shape.len()];
        let d = va.data();
        visit_broadcast(shape, &sa, &zeros, |o, i, _| out[o] = d[i]);
        let value = Tensor::new(shape.to_vec(), out)?;
        self.record("broadcast", value, Op::Broadcast(a), &[a])
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.nodes[a.0].value.clone().reshaped(shape.to_vec())?;
        self.record("reshape", value, Op::Reshape(a), &[a])
    }

    /// `x / sqrt(mean(x²) + eps)` over the last axis.
    pub fn rms_norm(&mut self, a: Var, eps: f64) -> Result<Var> {
        let va = &self.nodes[a.0].value;
        let shape = va.shape();
        let width = *shape.last().ok_or(Error::Shape {
            op: "rms_norm",
            lhs: vec![],
            rhs: vec![],
        })?;
        let mut out = va.data().to_vec();
        if width > 0 {
            for row in out.chunks_mut(width) {
                let ms = row.iter().map(|x| x * x).sum::<f64>() / width as f64;
                let inv = 1.0 / (ms + eps).sqrt();
                row.iter_mut().for_each(|x| *x *= inv);
            }
        }
        let value = Tensor::new(shape.to_vec(), out)?;
        self.record("rms_norm", value, Op::RmsNorm { src: a, eps }, &[a])
    }

    /// `out[i] = flat(a)[index[i]]`, or zero where `index[i] == GATHER_PAD`.
    pub fn gather(&mut self, a: Var, index: Vec<usize>, shape: &[usize]) -> Result<Var> {
        let va = &self.nodes[a.0].value;
        let n: usize = shape.iter().product();
        if n != index.len() || index.iter().any(|&i| i != GATHER_PAD && i >= va.len()) {
            return Err(Error::Shape {
                op: "gather",
                lhs: va.shape().to_vec(),
                rhs: shape.to_vec(),
            });
        }
        let d = va.data();
        let out = index
            .iter()
            .map(|&i| if i == GATHER_PAD { 0.0 } else { d[i] })
            .collect();
        let value = Tensor::new(shape.to_vec(), out)?;
        self.record("gather", value, Op::Gather { src: a, index }, &[a])
    }

    /// Squared Euclidean distances between rows of `x: [n, k]` and `y: [m, k]`.
    pub fn pairwise_sq_dist(&mut self, x: Var, y: Var) -> Result<Var> {
        let (vx, vy) = (&self.nodes[x.0].value, &self.nodes[y.0].value);
        let (sx, sy) = (vx.shape(), vy.shape());
        if sx.len() != 2 || sy.len() != 2 || sx[1] != sy[1] {
            return Err(Error::Shape {
                op: "pairwise_sq_dist",
                lhs: sx.to_vec(),
                rhs: sy.to_vec(),
            });
        }
        let (n, m, k) = (sx[0], sy[0], sx[1]);
        let (dx, dy) = (vx.data(), vy.data());
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let xi = &dx[i * k..(i + 1) * k];
            for j in 0..m {
                let yj = &dy[j * k..(j + 1) * k];
                out[i * m + j] = xi.iter().zip(yj).map(|(a, b)| (a - b) * (a - b)).sum();
            }
        }
        let value = Tensor::new(vec![n, m], out)?;
        self.record("pairwise_sq_dist", value, Op::PairwiseSqDist(x, y), &[x, y])
    }

    /// Reverse-mode sweep from a one-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = &self.nodes[loss.0].value;
        if !lv.is_scalar() {
            return Err(Error::NotAScalar(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![1.0]);
        }
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if node.requires_grad {
                self.propagate(node, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        for (g, node) in grads.iter_mut().zip(&self.nodes) {
            if !node.requires_grad {
                *g = None;
            }
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        let wants = |v: Var| self.nodes[v.0].requires_grad;
        let y = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                let out_shape = node.value.shape();
                for (v, s) in [(*a, 1.0), (*b, sign)] {
                    if !wants(v) {
                        continue;
                    }
                    let acc = accum(grads, v, val(v).len());
                    reduce_into(acc, val(v).shape(), out_shape, g, |gv| s * gv);
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                let out_shape = node.value.shape();
                let sa = broadcast_strides(va.shape(), out_shape);
                let sb = broadcast_strides(vb.shape(), out_shape);
                let (da, db) = (va.data(), vb.data());
                if wants(*a) {
                    let acc = accum(grads, *a, va.len());
                    visit_broadcast(out_shape, &sa, &sb, |o, i, j| acc[i] += g[o] * db[j]);
                }
                if wants(*b) {
                    let acc = accum(grads, *b, vb.len());
                    visit_broadcast(out_shape, &sa, &sb, |o, i, j| acc[j] += g[o] * da[i]);
                }
            }
            Op::MatMul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                let (m, k, n) = (va.shape()[0], va.shape()[1], vb.shape()[1]);
                if wants(*a) {
                    let acc = accum(grads, *a, m * k);
                    gemm(m, n, k, g, false, vb.data(), true, acc, true);
                }
                if wants(*b) {
                    let acc = accum(grads, *b, k * n);
                    gemm(k, m, n, va.data(), true, g, false, acc, true);
                }
            }
            Op::Exp(a) => self.unary_back(grads, *a, g, y, |_, yv| yv),
            Op::Ln(a) => self.unary_back(grads, *a, g, y, |x, _| 1.0 / x),
            Op::Softplus(a) => self.unary_back(grads, *a, g, y, |x, _| sigmoid(x)),
            Op::Silu(a) => self.unary_back(grads, *a, g, y, |x, _| {
                let s = sigmoid(x);
                s * (1.0 + x * (1.0 - s))
            }),
            Op::Square(a) => self.unary_back(grads, *a, g, y, |x, _| 2.0 * x),
            // subgradient 0 at the kink
            Op::Sqrt(a) => self.unary_back(grads, *a, g, y, |_, yv| if yv > 0.0 { 0.5 / yv } else { 0.0 }),
            Op::Recip(a) => self.unary_back(grads, *a, g, y, |_, yv| -yv * yv),
            Op::Scale(a, c) => {
                let c = *c;
                self.unary_back(grads, *a, g, y, |_, _| c)
            }
            Op::AddScalar(a) | Op::Reshape(a) => {
                if wants(*a) {
                    let acc = accum(grads, *a, g.len());
                    acc.iter_mut().zip(g).for_each(|(s, gv)| *s += gv);
                }
            }
            Op::SumAll(a) | Op::MeanAll(a) => {
                if wants(*a) {
                    let n = val(*a).len();
                    let scale = if matches!(node.op, Op::MeanAll(_)) { 1.0 / n as f64 } else { 1.0 };
                    let acc = accum(grads, *a, n);
                    acc.iter_mut().for_each(|s| *s += g[0] * scale);
                }
            }
            Op::SumAxis(a, axis) => {
                if wants(*a) {
                    let shape = val(*a).shape();
                    let outer: usize = shape[..*axis].iter().product();
                    let len = shape[*axis];
                    let inner: usize = shape[*axis + 1..].iter().product();
                    let acc = accum(grads, *a, outer * len * inner);
                    for o in 0..outer {
                        let grow = &g[o * inner..(o + 1) * inner];
                        for l in 0..len {
                            let base = (o * len + l) * inner;
                            for (s, gv) in acc[base..base + inner].iter_mut().zip(grow) {
                                *s += gv;
                            }
                        }
                    }
                }
            }
            Op::Concat(parts, axis) => {
                let shape = node.value.shape();
                let outer: usize = shape[..*axis].iter().product();
                let inner: usize = shape[*axis + 1..].iter().product();
                let total = shape[*axis];
                let mut offset = 0;
                for p in parts {
                    let len = val(*p).shape()[*axis];
                    if wants(*p) {
                        let acc = accum(grads, *p, outer * len * inner);
                        for o in 0..outer {
                            let from = (o * total + offset) * inner;
                            let dst = &mut acc[o * len * inner..(o + 1) * len * inner];
                            for (s, gv) in dst.iter_mut().zip(&g[from..from + len * inner]) {
                                *s += gv;
                            }
                        }
                    }
                    offset += len;
                }
            }
            Op::Slice { src, axis, start } => {
                if wants(*src) {
                    let shape = val(*src).shape();
                    let outer: usize = shape[..*axis].iter().product();
                    let inner: usize = shape[*axis + 1..].iter().product();
                    let len = shape[*axis];
                    let width = node.value.shape()[*axis];
                    let acc = accum(grads, *src, outer * len * inner);
                    for o in 0..outer {
                        let to = (o * len + start) * inner;
                        let from = o * width * inner;
                        for (s, gv) in acc[to..to + width * inner]
                            .iter_mut()
                            .zip(&g[from..from + width * inner])
                        {
                            *s += gv;
                        }
                    }
                }
            }
            Op::Transpose(a) => {
                if wants(*a) {
                    let (r, c) = (val(*a).shape()[0], val(*a).shape()[1]);
                    let acc = accum(grads, *a, r * c);
                    for i in 0..r {
                        for j in 0..c {
                            acc[i * c + j] += g[j * r + i];
                        }
                    }
                }
            }
            Op::Broadcast(a) => {
                if wants(*a) {
                    let acc = accum(grads, *a, val(*a).len());
                    reduce_into(acc, val(*a).shape(), node.value.shape(), g, |gv| gv);
                }
            }
            Op::RmsNorm { src, eps } => {
                if wants(*src) {
                    let x = val(*src).data();
                    let width = *node.value.shape().last().unwrap_or(&1);
                    let acc = accum(grads, *src, x.len());
                    for ((xr, yr), (gr, ar)) in x
                        .chunks(width)
                        .zip(y.chunks(width))
                        .zip(g.chunks(width).zip(acc.chunks_mut(width)))
                    {
                        let ms = xr.iter().map(|v| v * v).sum::<f64>() / width as f64;
                        let inv = 1.0 / (ms + eps).sqrt();
                        let gy = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / width as f64;
                        for ((s, gv), yv) in ar.iter_mut().zip(gr).zip(yr) {
                            *s += (gv - yv * gy) * inv;
                        }
                    }
                }
            }
            Op::Gather { src, index } => {
                if wants(*src) {
                    let acc = accum(grads, *src, val(*src).len());
                    for (&i, gv) in index.iter().zip(g) {
                        if i != GATHER_PAD {
                            acc[i] += gv;
                        }
                    }
                }
            }
            Op::PairwiseSqDist(x, yv) => {
                let (vx, vy) = (val(*x), val(*yv));
                let (n, m, k) = (vx.shape()[0], vy.shape()[0], vx.shape()[1]);
                let (dx, dy) = (vx.data(), vy.data());
                // grad_x_i = 2 Σ_j g_ij (x_i − y_j); grad_y_j = −2 Σ_i g_ij (x_i − y_j)
                if wants(*x) {
                    let acc = accum(grads, *x, n * k);
                    for i in 0..n {
                        for j in 0..m {
                            let gij = 2.0 * g[i * m + j];
                            if gij == 0.0 {
                                continue;
                            }
                            for c in 0..k {
                                acc[i * k + c] += gij * (dx[i * k + c] - dy[j * k + c]);
                            }
                        }
                    }
                }
                if wants(*yv) {
                    let acc = accum(grads, *yv, m * k);
                    for i in 0..n {
                        for j in 0..m {
                            let gij = 2.0 * g[i * m + j];
                            if gij == 0.0 {
                                continue;
                            }
                            for c in 0..k {
                                acc[j * k + c] -= gij * (dx[i * k + c] - dy[j * k + c]);
                            }
                        }
                    }
                }
            }
        }
    }

    fn unary_back(
        &self,
        grads: &mut [Option<Vec<f64>>],
        a: Var,
        g: &[f64],
        y: &[f64],
        d: impl Fn(f64, f64) -> f64,
    ) {
        let node = &self.nodes[a.0];
        if !node.requires_grad {
            return;
        }
        let x = node.value.data();
        let acc = accum(grads, a, x.len());
        for i in 0..x.len() {
            acc[i] += g[i] * d(x[i], y[i]);
        }
    }
}

fn accum(grads: &mut [Option<Vec<f64>>], v: Var, n: usize) -> &mut [f64] {
    grads[v.0].get_or_insert_with(|| vec![0.0; n]).as_mut_slice()
}

/// Sums a broadcast gradient `g` of shape `out` back into `acc` of shape `shape`.
fn reduce_into(acc: &mut [f64], shape: &[usize], out: &[usize], g: &[f64], f: impl Fn(f64) -> f64) {
    if shape == out {
        for (s, gv) in acc.iter_mut().zip(g) {
            *s += f(*gv);
        }
        return;
    }
    let sa = broadcast_strides(shape, out);
    let zeros = vec![0; out.len()];
    visit_broadcast(out, &sa, &zeros, |o, i, _| acc[i] += f(g[o]));
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}
