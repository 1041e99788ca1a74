// Reverse-mode differentiation over an eagerly recorded tape.
//
// Every kernel evaluates its forward value immediately and pushes a node
// holding the value and the handles of its inputs. `Tape::backward` walks
// the nodes in reverse and accumulates vector-Jacobian products.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddBias(Var, Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    MatMul(Var, Var),
    BatchMatMul(Var, Var),
    Transpose(Var),
    Reshape(Var),
    ConvTime(Var, Var),
    Sum(Var),
    Mean(Var),
    SumAxis(Var, usize),
    MeanAxis(Var, usize),
    Softmax(Var),
    LogSoftmax(Var),
    Norm(Var),
    CosineRows(Var, Var),
    Concat(Vec<Var>),
    SliceRows(Var, usize),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::AddBias(..) => "add_bias",
            Op::Relu(..) => "relu",
            Op::Exp(..) => "exp",
            Op::Log(..) => "log",
            Op::MatMul(..) => "matmul",
            Op::BatchMatMul(..) => "batch_matmul",
            Op::Transpose(..) => "transpose",
            Op::Reshape(..) => "reshape",
            Op::ConvTime(..) => "conv_time",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::SumAxis(..) => "sum_axis",
            Op::MeanAxis(..) => "mean_axis",
            Op::Softmax(..) => "softmax",
            Op::LogSoftmax(..) => "log_softmax",
            Op::Norm(..) => "norm",
            Op::CosineRows(..) => "cosine_rows",
            Op::Concat(..) => "concat",
            Op::SliceRows(..) => "slice_rows",
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Eager recording of primitive operations.
///
/// A tape is single-threaded and single-use: build the forward pass, call
/// [`Tape::backward`] once on a scalar output, read the gradients.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    relu_signature: u64,
}

/// Gradients returned by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`; zeros if `v` did not
    /// influence the loss.
    pub fn get(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[v.0]),
        }
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// Splits `shape` around `axis` into (outer, n, inner) extents.
fn axis_extents(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn last_axis(op: &'static str, t: &Tensor) -> Result<(usize, usize)> {
    let w = *t.shape().last().ok_or_else(|| Error::shape(op, "scalar input"))?;
    Ok((t.len() / w, w))
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Hash of the on/off pattern of every ReLU evaluated so far.
    ///
    /// Two evaluations with equal signatures took the same linear piece of
    /// the network; finite differences across differing signatures straddle
    /// a kink.
    pub fn relu_signature(&self) -> u64 {
        self.relu_signature
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A leaf whose gradient is wanted.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// A leaf treated as a constant.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("add", x, y)?;
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p + q).collect();
        let out = Tensor::from_parts(x.shape().to_vec(), data);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("sub", x, y)?;
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p - q).collect();
        let out = Tensor::from_parts(x.shape().to_vec(), data);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("mul", x, y)?;
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p * q).collect();
        let out = Tensor::from_parts(x.shape().to_vec(), data);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|v| v * c);
        let rg = self.rg(a);
        self.push(out, Op::Scale(a, c), rg)
    }

    /// `x[..., c] + b[c]`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(b));
        let (_, c) = last_axis("add_bias", xv)?;
        if bv.shape() != [c] {
            return Err(Error::shape("add_bias", format!("bias {:?} for channels {c}", bv.shape())));
        }
        let bias = bv.data();
        let data = xv.data().iter().enumerate().map(|(i, v)| v + bias[i % c]).collect();
        let out = Tensor::from_parts(xv.shape().to_vec(), data);
        let rg = self.rg(x) || self.rg(b);
        Ok(self.push(out, Op::AddBias(x, b), rg))
    }

    /// Rectifier; the derivative at exactly zero is zero.
    pub fn relu(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut sig = self.relu_signature ^ 0x9E37_79B9_7F4A_7C15;
        let mut data = Vec::with_capacity(x.len());
        for &v in x.data() {
            let on = v > 0.0;
            sig = (sig ^ u64::from(on)).wrapping_mul(0x0000_0100_0000_01b3);
            data.push(if on { v } else { 0.0 });
        }
        let out = Tensor::from_parts(x.shape().to_vec(), data);
        self.relu_signature = sig;
        let rg = self.rg(a);
        self.push(out, Op::Relu(a), rg)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(libm::exp);
        if !out.is_finite() {
            return Err(Error::NonFinite { op: "exp" });
        }
        let rg = self.rg(a);
        Ok(self.push(out, Op::Exp(a), rg))
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(libm::log);
        if !out.is_finite() {
            return Err(Error::NonFinite { op: "log" });
        }
        let rg = self.rg(a);
        Ok(self.push(out, Op::Log(a), rg))
    }

    /// `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.ndim() != 2 || y.ndim() != 2 || x.shape()[1] != y.shape()[0] {
            return Err(Error::shape("matmul", format!("{:?} x {:?}", x.shape(), y.shape())));
        }
        let (m, k, n) = (x.shape()[0], x.shape()[1], y.shape()[1]);
        let mut out = vec![0.0; m * n];
        gemm(x.data(), y.data(), &mut out, m, k, n);
        let out = Tensor::from_parts(vec![m, n], out);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    /// `[B, m, k] x [B, k, n] -> [B, m, n]`.
    pub fn batch_matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.ndim() != 3 || y.ndim() != 3 || x.shape()[0] != y.shape()[0] || x.shape()[2] != y.shape()[1] {
            return Err(Error::shape("batch_matmul", format!("{:?} x {:?}", x.shape(), y.shape())));
        }
        let (bs, m, k, n) = (x.shape()[0], x.shape()[1], x.shape()[2], y.shape()[2]);
        let mut out = vec![0.0; bs * m * n];
        for b in 0..bs {
            gemm(
                &x.data()[b * m * k..(b + 1) * m * k],
                &y.data()[b * k * n..(b + 1) * k * n],
                &mut out[b * m * n..(b + 1) * m * n],
                m,
                k,
                n,
            );
        }
        let out = Tensor::from_parts(vec![bs, m, n], out);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::BatchMatMul(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if x.ndim() != 2 {
            return Err(Error::shape("transpose", format!("{:?}", x.shape())));
        }
        let out = transpose2(x);
        let rg = self.rg(a);
        Ok(self.push(out, Op::Transpose(a), rg))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).reshape(shape)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::Reshape(a), rg))
    }

    /// Same-length 1-D convolution along axis 2 of `x: [B, P, L, C_in]`
    /// with `w: [C_out, C_in, K]`, `K` odd, zero padding.
    pub fn conv_time(&mut self, x: Var, w: Var) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        if xv.ndim() != 4 || wv.ndim() != 3 || wv.shape()[1] != xv.shape()[3] || wv.shape()[2] % 2 == 0 {
            return Err(Error::shape("conv_time", format!("x {:?}, kernel {:?}", xv.shape(), wv.shape())));
        }
        let (bp, l, cin) = (xv.shape()[0] * xv.shape()[1], xv.shape()[2], xv.shape()[3]);
        let (cout, k) = (wv.shape()[0], wv.shape()[2]);
        let half = k / 2;
        // wt[k][i][o] keeps the output channel contiguous in the inner loop.
        let mut wt = vec![0.0; k * cin * cout];
        for o in 0..cout {
            for i in 0..cin {
                for t in 0..k {
                    wt[(t * cin + i) * cout + o] = wv.data()[(o * cin + i) * k + t];
                }
            }
        }
        let mut out = vec![0.0; bp * l * cout];
        let xd = xv.data();
        for s in 0..bp {
            let xs = &xd[s * l * cin..(s + 1) * l * cin];
            let ys = &mut out[s * l * cout..(s + 1) * l * cout];
            for pos in 0..l {
                let yrow = &mut ys[pos * cout..(pos + 1) * cout];
                for t in 0..k {
                    let src = pos + t;
                    if src < half || src - half >= l {
                        continue;
                    }
                    let xrow = &xs[(src - half) * cin..(src - half + 1) * cin];
                    for (i, &xi) in xrow.iter().enumerate() {
                        let wrow = &wt[(t * cin + i) * cout..(t * cin + i + 1) * cout];
                        for (y, &wo) in yrow.iter_mut().zip(wrow) {
                            *y += xi * wo;
                        }
                    }
                }
            }
        }
        let mut shape = xv.shape().to_vec();
        shape[3] = cout;
        let out = Tensor::from_parts(shape, out);
        let rg = self.rg(x) || self.rg(w);
        Ok(self.push(out, Op::ConvTime(x, w), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let s = x.data().iter().sum::<f64>() / x.len() as f64;
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Mean(a), rg)
    }

    /// Sums out `axis`, removing it from the shape.
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let out = self.reduce_axis("sum_axis", a, axis, 1.0)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::SumAxis(a, axis), rg))
    }

    /// Averages out `axis`, removing it from the shape.
    pub fn mean_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let n = *self.value(a).shape().get(axis).ok_or_else(|| Error::shape("mean_axis", "axis out of range"))?;
        let out = self.reduce_axis("mean_axis", a, axis, 1.0 / n as f64)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::MeanAxis(a, axis), rg))
    }

    fn reduce_axis(&self, op: &'static str, a: Var, axis: usize, factor: f64) -> Result<Tensor> {
        let x = self.value(a);
        if axis >= x.ndim() {
            return Err(Error::shape(op, format!("axis {axis} of {:?}", x.shape())));
        }
        let (outer, n, inner) = axis_extents(x.shape(), axis);
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for j in 0..n {
                let src = &x.data()[(o * n + j) * inner..(o * n + j + 1) * inner];
                for (d, s) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        if factor != 1.0 {
            out.iter_mut().for_each(|v| *v *= factor);
        }
        let mut shape = x.shape().to_vec();
        shape.remove(axis);
        Ok(Tensor::from_parts(shape, out))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let (rows, w) = last_axis("softmax", x)?;
        let mut out = vec![0.0; x.len()];
        for r in 0..rows {
            softmax_row(&x.data()[r * w..(r + 1) * w], &mut out[r * w..(r + 1) * w]);
        }
        let out = Tensor::from_parts(x.shape().to_vec(), out);
        let rg = self.rg(a);
        Ok(self.push(out, Op::Softmax(a), rg))
    }

    /// Numerically stable `log(softmax(x))` over the last axis.
    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let (rows, w) = last_axis("log_softmax", x)?;
        let mut out = vec![0.0; x.len()];
        for r in 0..rows {
            let row = &x.data()[r * w..(r + 1) * w];
            let lse = log_sum_exp(row);
            for (o, v) in out[r * w..(r + 1) * w].iter_mut().zip(row) {
                *o = v - lse;
            }
        }
        let out = Tensor::from_parts(x.shape().to_vec(), out);
        let rg = self.rg(a);
        Ok(self.push(out, Op::LogSoftmax(a), rg))
    }

    /// Euclidean norm over the last axis.
    pub fn norm(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let (rows, w) = last_axis("norm", x)?;
        let data = (0..rows).map(|r| l2(&x.data()[r * w..(r + 1) * w])).collect();
        let mut shape = x.shape().to_vec();
        shape.pop();
        let out = Tensor::from_parts(shape, data);
        let rg = self.rg(a);
        Ok(self.push(out, Op::Norm(a), rg))
    }

    /// Pairwise cosine similarity of the rows of `a: [N, E]` and `b: [M, E]`.
    pub fn cosine_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.ndim() != 2 || y.ndim() != 2 || x.shape()[1] != y.shape()[1] {
            return Err(Error::shape("cosine_rows", format!("{:?} vs {:?}", x.shape(), y.shape())));
        }
        let (n, m) = (x.shape()[0], y.shape()[0]);
        let nx: Vec<f64> = (0..n).map(|i| l2(x.row(i))).collect();
        let ny: Vec<f64> = (0..m).map(|j| l2(y.row(j))).collect();
        if nx.iter().chain(&ny).any(|&v| v == 0.0) {
            return Err(Error::degenerate("cosine similarity", "zero-norm row"));
        }
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                let dot: f64 = x.row(i).iter().zip(y.row(j)).map(|(p, q)| p * q).sum();
                out[i * m + j] = dot / (nx[i] * ny[j]);
            }
        }
        let out = Tensor::from_parts(vec![n, m], out);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::CosineRows(a, b), rg))
    }

    /// Concatenation along axis 0.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| Error::shape("concat", "no inputs"))?;
        let tail = self.value(*first).shape()[1..].to_vec();
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let v = self.value(p);
            if v.ndim() == 0 || v.shape()[1..] != tail[..] {
                return Err(Error::shape("concat", format!("{:?} vs trailing {tail:?}", v.shape())));
            }
            rows += v.shape()[0];
            data.extend_from_slice(v.data());
        }
        let mut shape = vec![rows];
        shape.extend_from_slice(&tail);
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(Tensor::from_parts(shape, data), Op::Concat(parts.to_vec()), rg))
    }

    /// Rows `start..end` along axis 0.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let x = self.value(a);
        if x.ndim() == 0 || start >= end || end > x.shape()[0] {
            return Err(Error::shape("slice_rows", format!("{start}..{end} of {:?}", x.shape())));
        }
        let w: usize = x.shape()[1..].iter().product();
        let data = x.data()[start * w..end * w].to_vec();
        let mut shape = x.shape().to_vec();
        shape[0] = end - start;
        let rg = self.rg(a);
        Ok(self.push(Tensor::from_parts(shape, data), Op::SliceRows(a, start), rg))
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::NonScalarLoss { shape: lv.shape().to_vec() });
        }
        if !lv.is_finite() {
            return Err(Error::NonFinite { op: "loss" });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        for (i, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                if !g.is_finite() {
                    return Err(Error::NonFinite { op: self.nodes[i].op.name() });
                }
            }
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[idx];
        let out = &node.value;
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accum(grads, *a, || g.clone());
                self.accum(grads, *b, || g.clone());
            }
            Op::Sub(a, b) => {
                self.accum(grads, *a, || g.clone());
                self.accum(grads, *b, || g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let (x, y) = (self.value(*a), self.value(*b));
                self.accum(grads, *a, || zip_map(g, y, |p, q| p * q));
                self.accum(grads, *b, || zip_map(g, x, |p, q| p * q));
            }
            Op::Scale(a, c) => {
                let c = *c;
                self.accum(grads, *a, || g.map(|v| v * c));
            }
            Op::AddBias(x, b) => {
                self.accum(grads, *x, || g.clone());
                self.accum(grads, *b, || {
                    let c = self.value(*b).len();
                    let mut gb = vec![0.0; c];
                    for (i, v) in gd.iter().enumerate() {
                        gb[i % c] += v;
                    }
                    Tensor::from_parts(vec![c], gb)
                });
            }
            Op::Relu(a) => {
                let x = self.value(*a);
                self.accum(grads, *a, || zip_map(g, x, |p, q| if q > 0.0 { p } else { 0.0 }));
            }
            Op::Exp(a) => self.accum(grads, *a, || zip_map(g, out, |p, q| p * q)),
            Op::Log(a) => {
                let x = self.value(*a);
                self.accum(grads, *a, || zip_map(g, x, |p, q| p / q));
            }
            Op::MatMul(a, b) => {
                let (x, y) = (self.value(*a), self.value(*b));
                let (m, k, n) = (x.shape()[0], x.shape()[1], y.shape()[1]);
                self.accum(grads, *a, || {
                    let yt = transpose2(y);
                    let mut ga = vec![0.0; m * k];
                    gemm(gd, yt.data(), &mut ga, m, n, k);
                    Tensor::from_parts(vec![m, k], ga)
                });
                self.accum(grads, *b, || {
                    let xt = transpose2(x);
                    let mut gb = vec![0.0; k * n];
                    gemm(xt.data(), gd, &mut gb, k, m, n);
                    Tensor::from_parts(vec![k, n], gb)
                });
            }
            Op::BatchMatMul(a, b) => {
                let (x, y) = (self.value(*a), self.value(*b));
                let (bs, m, k, n) = (x.shape()[0], x.shape()[1], x.shape()[2], y.shape()[2]);
                self.accum(grads, *a, || {
                    let mut ga = vec![0.0; bs * m * k];
                    for s in 0..bs {
                        let ys = &y.data()[s * k * n..(s + 1) * k * n];
                        let gs = &gd[s * m * n..(s + 1) * m * n];
                        let dst = &mut ga[s * m * k..(s + 1) * m * k];
                        // dst[i][p] = sum_j g[i][j] * y[p][j]
                        for i in 0..m {
                            for p in 0..k {
                                dst[i * k + p] = gs[i * n..(i + 1) * n]
                                    .iter()
                                    .zip(&ys[p * n..(p + 1) * n])
                                    .map(|(u, v)| u * v)
                                    .sum();
                            }
                        }
                    }
                    Tensor::from_parts(vec![bs, m, k], ga)
                });
                self.accum(grads, *b, || {
                    let mut gb = vec![0.0; bs * k * n];
                    for s in 0..bs {
                        let xs = &x.data()[s * m * k..(s + 1) * m * k];
                        let gs = &gd[s * m * n..(s + 1) * m * n];
                        let dst = &mut gb[s * k * n..(s + 1) * k * n];
                        // dst[p][j] = sum_i x[i][p] * g[i][j]
                        for i in 0..m {
                            let grow = &gs[i * n..(i + 1) * n];
                            for p in 0..k {
                                let xv = xs[i * k + p];
                                if xv == 0.0 {
                                    continue;
                                }
                                for (d, gv) in dst[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                    *d += xv * gv;
                                }
                            }
                        }
                    }
                    Tensor::from_parts(vec![bs, k, n], gb)
                });
            }
            Op::Transpose(a) => self.accum(grads, *a, || transpose2(g)),
            Op::Reshape(a) => {
                let shape = self.value(*a).shape().to_vec();
                self.accum(grads, *a, || Tensor::from_parts(shape.clone(), gd.to_vec()));
            }
            Op::ConvTime(x, w) => self.conv_time_backward(*x, *w, g, grads),
            Op::Sum(a) => {
                let s = gd[0];
                let shape = self.value(*a).shape().to_vec();
                self.accum(grads, *a, || Tensor::full(&shape, s));
            }
            Op::Mean(a) => {
                let x = self.value(*a);
                let s = gd[0] / x.len() as f64;
                self.accum(grads, *a, || Tensor::full(x.shape(), s));
            }
            Op::SumAxis(a, axis) | Op::MeanAxis(a, axis) => {
                let x = self.value(*a);
                let (outer, n, inner) = axis_extents(x.shape(), *axis);
                let factor = if matches!(node.op, Op::MeanAxis(..)) { 1.0 / n as f64 } else { 1.0 };
                self.accum(grads, *a, || {
                    let mut ga = vec![0.0; x.len()];
                    for o in 0..outer {
                        let src = &gd[o * inner..(o + 1) * inner];
                        for j in 0..n {
                            for (d, s) in ga[(o * n + j) * inner..(o * n + j + 1) * inner].iter_mut().zip(src) {
                                *d = s * factor;
                            }
                        }
                    }
                    Tensor::from_parts(x.shape().to_vec(), ga)
                });
            }
            Op::Softmax(a) => {
                let w = *out.shape().last().unwrap();
                self.accum(grads, *a, || {
                    let mut ga = vec![0.0; out.len()];
                    for r in 0..out.len() / w {
                        let y = &out.data()[r * w..(r + 1) * w];
                        let gr = &gd[r * w..(r + 1) * w];
                        let dot: f64 = y.iter().zip(gr).map(|(p, q)| p * q).sum();
                        for j in 0..w {
                            ga[r * w + j] = y[j] * (gr[j] - dot);
                        }
                    }
                    Tensor::from_parts(out.shape().to_vec(), ga)
                });
            }
            Op::LogSoftmax(a) => {
                let w = *out.shape().last().unwrap();
                self.accum(grads, *a, || {
                    let mut ga = vec![0.0; out.len()];
                    for r in 0..out.len() / w {
                        let y = &out.data()[r * w..(r + 1) * w];
                        let gr = &gd[r * w..(r + 1) * w];
                        let total: f64 = gr.iter().sum();
                        for j in 0..w {
                            ga[r * w + j] = gr[j] - libm::exp(y[j]) * total;
                        }
                    }
                    Tensor::from_parts(out.shape().to_vec(), ga)
                });
            }
            Op::Norm(a) => {
                let x = self.value(*a);
                let w = *x.shape().last().unwrap();
                self.accum(grads, *a, || {
                    let mut ga = vec![0.0; x.len()];
                    for r in 0..x.len() / w {
                        let nrm = out.data()[r];
                        if nrm == 0.0 {
                            continue;
                        }
                        for j in 0..w {
                            ga[r * w + j] = gd[r] * x.data()[r * w + j] / nrm;
                        }
                    }
                    Tensor::from_parts(x.shape().to_vec(), ga)
                });
            }
            Op::CosineRows(a, b) => {
                let (x, y) = (self.value(*a), self.value(*b));
                let (n, m, e) = (x.shape()[0], y.shape()[0], x.shape()[1]);
                let nx: Vec<f64> = (0..n).map(|i| l2(x.row(i))).collect();
                let ny: Vec<f64> = (0..m).map(|j| l2(y.row(j))).collect();
                let s = out.data();
                self.accum(grads, *a, || {
                    let mut ga = vec![0.0; n * e];
                    for i in 0..n {
                        for j in 0..m {
                            let gij = gd[i * m + j];
                            if gij == 0.0 {
                                continue;
                            }
                            let c1 = gij / (nx[i] * ny[j]);
                            let c2 = gij * s[i * m + j] / (nx[i] * nx[i]);
                            for t in 0..e {
                                ga[i * e + t] += c1 * y.row(j)[t] - c2 * x.row(i)[t];
                            }
                        }
                    }
                    Tensor::from_parts(vec![n, e], ga)
                });
                self.accum(grads, *b, || {
                    let mut gb = vec![0.0; m * e];
                    for i in 0..n {
                        for j in 0..m {
                            let gij = gd[i * m + j];
                            if gij == 0.0 {
                                continue;
                            }
                            let c1 = gij / (nx[i] * ny[j]);
                            let c2 = gij * s[i * m + j] / (ny[j] * ny[j]);
                            for t in 0..e {
                                gb[j * e + t] += c1 * x.row(i)[t] - c2 * y.row(j)[t];
                            }
                        }
                    }
                    Tensor::from_parts(vec![m, e], gb)
                });
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let shape = self.value(p).shape().to_vec();
                    let len: usize = shape.iter().product();
                    let start = offset;
                    self.accum(grads, p, || Tensor::from_parts(shape.clone(), gd[start..start + len].to_vec()));
                    offset += len;
                }
            }
            Op::SliceRows(a, start) => {
                let x = self.value(*a);
                let w: usize = x.shape()[1..].iter().product();
                let start = *start;
                self.accum(grads, *a, || {
                    let mut ga = vec![0.0; x.len()];
                    ga[start * w..start * w + gd.len()].copy_from_slice(gd);
                    Tensor::from_parts(x.shape().to_vec(), ga)
                });
            }
        }
        Ok(())
    }

    fn conv_time_backward(&self, x: Var, w: Var, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let (xv, wv) = (self.value(x), self.value(w));
        let (bp, l, cin) = (xv.shape()[0] * xv.shape()[1], xv.shape()[2], xv.shape()[3]);
        let (cout, k) = (wv.shape()[0], wv.shape()[2]);
        let half = k / 2;
        let gd = g.data();
        let xd = xv.data();
        let wd = wv.data();
        self.accum(grads, x, || {
            // wt[t][o][i] keeps the input channel contiguous.
            let mut wt = vec![0.0; k * cout * cin];
            for o in 0..cout {
                for i in 0..cin {
                    for t in 0..k {
                        wt[(t * cout + o) * cin + i] = wd[(o * cin + i) * k + t];
                    }
                }
            }
            let mut gx = vec![0.0; xv.len()];
            for s in 0..bp {
                for pos in 0..l {
                    let grow = &gd[(s * l + pos) * cout..(s * l + pos + 1) * cout];
                    for t in 0..k {
                        let src = pos + t;
                        if src < half || src - half >= l {
                            continue;
                        }
                        let base = (s * l + src - half) * cin;
                        let gxrow = &mut gx[base..base + cin];
                        for (o, &go) in grow.iter().enumerate() {
                            if go == 0.0 {
                                continue;
                            }
                            let wrow = &wt[(t * cout + o) * cin..(t * cout + o + 1) * cin];
                            for (gi, &wi) in gxrow.iter_mut().zip(wrow) {
                                *gi += go * wi;
                            }
                        }
                    }
                }
            }
            Tensor::from_parts(xv.shape().to_vec(), gx)
        });
        self.accum(grads, w, || {
            // Accumulated as gt[t][o][i], then laid out as [o][i][t].
            let mut gt = vec![0.0; k * cout * cin];
            for s in 0..bp {
                for pos in 0..l {
                    let grow = &gd[(s * l + pos) * cout..(s * l + pos + 1) * cout];
                    for t in 0..k {
                        let src = pos + t;
                        if src < half || src - half >= l {
                            continue;
                        }
                        let xrow = &xd[(s * l + src - half) * cin..(s * l + src - half + 1) * cin];
                        for (o, &go) in grow.iter().enumerate() {
                            if go == 0.0 {
                                continue;
                            }
                            let grow_w = &mut gt[(t * cout + o) * cin..(t * cout + o + 1) * cin];
                            for (gw, &xi) in grow_w.iter_mut().zip(xrow) {
                                *gw += go * xi;
                            }
                        }
                    }
                }
            }
            let mut gw = vec![0.0; wv.len()];
            for o in 0..cout {
                for i in 0..cin {
                    for t in 0..k {
                        gw[(o * cin + i) * k + t] = gt[(t * cout + o) * cin + i];
                    }
                }
            }
            Tensor::from_parts(wv.shape().to_vec(), gw)
        });
    }

    fn accum(&self, grads: &mut [Option<Tensor>], v: Var, make: impl FnOnce() -> Tensor) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        let delta = make();
        match &mut grads[v.0] {
            Some(acc) => {
                for (a, d) in acc.data_mut().iter_mut().zip(delta.data()) {
                    *a += d;
                }
            }
            slot => *slot = Some(delta),
        }
    }
}

/// Value and gradient of a scalar function of a parameter set.
///
/// `loss_fn` receives a fresh tape with every entry of `params` registered
/// as a differentiable leaf. Parameters are not modified.
pub fn grad<F>(params: &[Tensor], loss_fn: F) -> Result<(f64, Vec<Tensor>)>
where
    F: FnOnce(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let loss = loss_fn(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;
    Ok((tape.value(loss).item(), vars.iter().map(|&v| grads.get(v)).collect()))
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&p, &q)| f(p, q)).collect();
    Tensor::from_parts(a.shape().to_vec(), data)
}

fn transpose2(x: &Tensor) -> Tensor {
    let (m, n) = (x.shape()[0], x.shape()[1]);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = x.data()[i * n + j];
        }
    }
    Tensor::from_parts(vec![n, m], out)
}

/// `out += a[m, k] * b[k, n]` for row-major slices.
fn gemm(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            for (o, bv) in orow.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o += av * bv;
            }
        }
    }
}

fn l2(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + libm::log(row.iter().map(|v| libm::exp(v - max)).sum::<f64>())
}

pub(crate) fn softmax_row(row: &[f64], out: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, v) in out.iter_mut().zip(row) {
        *o = libm::exp(v - max);
        total += *o;
    }
    out.iter_mut().for_each(|o| *o /= total);
}
