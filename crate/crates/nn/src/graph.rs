//! Tape-based reverse-mode differentiation.
//!
//! Every operation appends a node holding its value and enough saved state to
//! run its adjoint. Node indices are topologically ordered by construction, so
//! the backward sweep is a single reverse pass.

use crate::kernels::{self, gemm, Window};
use crate::{NnError, Result, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Unary {
    LeakyRelu(f64),
    Sigmoid,
    Tanh,
    Sin,
    Cos,
    Ln,
    Sqrt,
    Square,
    Cube,
}

impl Unary {
    fn apply(self, x: f64) -> f64 {
        match self {
            Unary::LeakyRelu(a) => {
                if x > 0.0 {
                    x
                } else {
                    a * x
                }
            }
            Unary::Sigmoid => {
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            }
            Unary::Tanh => x.tanh(),
            Unary::Sin => x.sin(),
            Unary::Cos => x.cos(),
            Unary::Ln => x.ln(),
            Unary::Sqrt => x.sqrt(),
            Unary::Square => x * x,
            Unary::Cube => x * x * x,
        }
    }

    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Unary::LeakyRelu(a) => {
                if x > 0.0 {
                    1.0
                } else {
                    a
                }
            }
            Unary::Sigmoid => y * (1.0 - y),
            Unary::Tanh => 1.0 - y * y,
            Unary::Sin => x.cos(),
            Unary::Cos => -x.sin(),
            Unary::Ln => 1.0 / x,
            // sqrt is only differentiated away from zero; the zero branch
            // matters for degenerate (constant) batches.
            Unary::Sqrt => {
                if y > 0.0 {
                    0.5 / y
                } else {
                    0.0
                }
            }
            Unary::Square => 2.0 * x,
            Unary::Cube => 3.0 * x * x,
        }
    }
}

enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Affine(Var, f64),
    Broadcast(Var),
    Sum(Var),
    Mean(Var),
    Unary(Var, Unary),
    Gather(Var, Vec<usize>),
    Reshape(Var),
    Concat(Vec<Var>),
    Dense {
        x: Var,
        w: Var,
        b: Var,
    },
    Conv {
        x: Var,
        w: Var,
        b: Var,
        win: Window,
        cols: Vec<f64>,
    },
    ConvT {
        x: Var,
        w: Var,
        b: Var,
        win: Window,
        xm: Vec<f64>,
    },
    Norm {
        x: Var,
        gamma: Var,
        beta: Var,
        labels: Vec<usize>,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        batch_stats: bool,
    },
    Bce {
        p: Var,
        targets: Vec<f64>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Per-channel statistics of a training-mode normalization.
#[derive(Clone, Debug)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Biased (population) variance.
    pub var: Vec<f64>,
    pub count: usize,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of every leaf that required them.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

fn shape_err(context: &str, expected: &[usize], actual: &[usize]) -> NnError {
    NnError::Shape {
        context: context.to_string(),
        expected: expected.to_vec(),
        actual: actual.to_vec(),
    }
}

/// `(batch, channels, plane)` view of a 2-D or higher tensor.
fn channel_view(shape: &[usize]) -> (usize, usize, usize) {
    let b = shape[0];
    let c = if shape.len() > 1 { shape[1] } else { 1 };
    let plane = shape.iter().skip(2).product::<usize>().max(1);
    (b, c, plane)
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

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
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

    fn binary(&mut self, a: Var, b: Var, name: &str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(shape_err(name, va.shape(), vb.shape()));
        }
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let t = Tensor::raw(va.shape().to_vec(), data);
        let rg = self.rg(&[a, b]);
        Ok(self.push(t, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "div", |x, y| x / y, Op::Div(a, b))
    }

    /// `scale * x + shift`.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let v = self.value(x);
        let data = v.data().iter().map(|&a| scale * a + shift).collect();
        let t = Tensor::raw(v.shape().to_vec(), data);
        let rg = self.rg(&[x]);
        self.push(t, Op::Affine(x, scale), rg)
    }

    pub fn scale(&mut self, x: Var, scale: f64) -> Var {
        self.affine(x, scale, 0.0)
    }

    /// Repeats a one-element tensor into `shape`.
    pub fn broadcast(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(x);
        if v.len() != 1 {
            return Err(shape_err("broadcast", &[1], v.shape()));
        }
        let t = Tensor::full(shape, v.item());
        let rg = self.rg(&[x]);
        Ok(self.push(t, Op::Broadcast(x), rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: f64 = self.value(x).data().iter().sum();
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let s: f64 = v.data().iter().sum::<f64>() / v.len() as f64;
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(s), Op::Mean(x), rg)
    }

    pub fn unary(&mut self, x: Var, f: Unary) -> Var {
        let v = self.value(x);
        let data = v.data().iter().map(|&a| f.apply(a)).collect();
        let t = Tensor::raw(v.shape().to_vec(), data);
        let rg = self.rg(&[x]);
        self.push(t, Op::Unary(x, f), rg)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        self.unary(x, Unary::LeakyRelu(slope))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Tanh)
    }

    pub fn sin(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Sin)
    }

    pub fn cos(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Cos)
    }

    pub fn ln(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Ln)
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Sqrt)
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Square)
    }

    pub fn cube(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Cube)
    }

    /// `out[i] = x[index[i]]`, reshaped to `shape`. Covers crops, periodic
    /// shifts and permutations.
    pub fn gather(&mut self, x: Var, index: Vec<usize>, shape: &[usize]) -> Result<Var> {
        let v = self.value(x);
        if shape.iter().product::<usize>() != index.len() {
            return Err(shape_err("gather", shape, &[index.len()]));
        }
        if let Some(&bad) = index.iter().find(|&&i| i >= v.len()) {
            return Err(shape_err("gather index", &[v.len()], &[bad]));
        }
        let data = index.iter().map(|&i| v.data()[i]).collect();
        let t = Tensor::raw(shape.to_vec(), data);
        let rg = self.rg(&[x]);
        Ok(self.push(t, Op::Gather(x, index), rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshape(shape)?;
        let rg = self.rg(&[x]);
        Ok(self.push(t, Op::Reshape(x), rg))
    }

    /// Concatenates along dimension 1; all parts share the batch dimension
    /// and any trailing dimensions.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = self.value(parts[0]).shape().to_vec();
        let (b, _, plane) = channel_view(&first);
        let mut channels = 0;
        for &p in parts {
            let s = self.value(p).shape();
            let (pb, pc, pp) = channel_view(s);
            if pb != b || pp != plane || s.len() != first.len() || s[2..] != first[2..] {
                return Err(shape_err("concat", &first, s));
            }
            channels += pc;
        }
        let mut data = Vec::with_capacity(b * channels * plane);
        for bi in 0..b {
            for &p in parts {
                let v = self.value(p);
                let (_, pc, _) = channel_view(v.shape());
                data.extend_from_slice(&v.data()[bi * pc * plane..(bi + 1) * pc * plane]);
            }
        }
        let mut shape = first;
        shape[1] = channels;
        let rg = self.rg(parts);
        Ok(self.push(Tensor::raw(shape, data), Op::Concat(parts.to_vec()), rg))
    }

    /// `x (B, in) · wᵀ (in, out) + b`.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xs, ws, bs) = (self.shape(x), self.shape(w), self.shape(b));
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] || bs != [ws[0]] {
            return Err(shape_err("dense", &[xs[0], ws.get(1).copied().unwrap_or(0)], xs));
        }
        let (batch, inf, outf) = (xs[0], ws[1], ws[0]);
        let mut out = Vec::with_capacity(batch * outf);
        for _ in 0..batch {
            out.extend_from_slice(self.value(b).data());
        }
        gemm(batch, inf, outf, 1.0, self.value(x).data(), false, self.value(w).data(), true, 1.0, &mut out);
        let rg = self.rg(&[x, w, b]);
        Ok(self.push(Tensor::raw(vec![batch, outf], out), Op::Dense { x, w, b }, rg))
    }

    /// Zero-padded 2-D convolution; `w` is `(out, in, k, k)`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, padding: usize) -> Result<Var> {
        let (xs, ws) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if xs.len() != 4 || ws.len() != 4 || xs[1] != ws[1] || ws[2] != ws[3] {
            return Err(shape_err("conv2d", &ws, &xs));
        }
        let (batch, cin, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
        let (cout, k) = (ws[0], ws[2]);
        let (Some(ho), Some(wo)) = (
            kernels::conv_output_side(h, k, stride, padding),
            kernels::conv_output_side(wd, k, stride, padding),
        ) else {
            return Err(shape_err("conv2d window", &[k, k], &[h, wd]));
        };
        let win = Window {
            batch,
            channels: cin,
            img_h: h,
            img_w: wd,
            grid_h: ho,
            grid_w: wo,
            kernel: k,
            stride,
            padding,
        };
        let cols = kernels::im2col(&win, self.value(x).data());
        let n = win.cols();
        let mut cm = vec![0.0; cout * n];
        gemm(cout, win.rows(), n, 1.0, self.value(w).data(), false, &cols, false, 0.0, &mut cm);
        let plane = ho * wo;
        let mut out = kernels::channel_to_batch_major(&cm, batch, cout, plane);
        add_channel_bias(&mut out, self.value(b).data(), batch, cout, plane);
        let rg = self.rg(&[x, w, b]);
        let t = Tensor::raw(vec![batch, cout, ho, wo], out);
        Ok(self.push(t, Op::Conv { x, w, b, win, cols }, rg))
    }

    /// Transposed convolution; `w` is `(in, out, k, k)`. Output side is
    /// `(s - 1) * stride - 2 * padding + k`.
    pub fn conv_transpose2d(&mut self, x: Var, w: Var, b: Var, stride: usize, padding: usize) -> Result<Var> {
        let (xs, ws) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if xs.len() != 4 || ws.len() != 4 || xs[1] != ws[0] || ws[2] != ws[3] {
            return Err(shape_err("conv_transpose2d", &ws, &xs));
        }
        let (batch, cin, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
        let (cout, k) = (ws[1], ws[2]);
        let (Some(ho), Some(wo)) = (
            kernels::conv_transpose_output_side(h, k, stride, padding),
            kernels::conv_transpose_output_side(wd, k, stride, padding),
        ) else {
            return Err(shape_err("conv_transpose2d window", &[k, k], &[h, wd]));
        };
        let win = Window {
            batch,
            channels: cout,
            img_h: ho,
            img_w: wo,
            grid_h: h,
            grid_w: wd,
            kernel: k,
            stride,
            padding,
        };
        let xm = kernels::batch_to_channel_major(self.value(x).data(), batch, cin, h * wd);
        let mut cols = vec![0.0; win.rows() * win.cols()];
        gemm(win.rows(), cin, win.cols(), 1.0, self.value(w).data(), true, &xm, false, 0.0, &mut cols);
        let mut out = kernels::col2im(&win, &cols);
        add_channel_bias(&mut out, self.value(b).data(), batch, cout, ho * wo);
        let rg = self.rg(&[x, w, b]);
        let t = Tensor::raw(vec![batch, cout, ho, wo], out);
        Ok(self.push(t, Op::ConvT { x, w, b, win, xm }, rg))
    }

    fn check_norm(&self, x: Var, gamma: Var, beta: Var, labels: &[usize]) -> Result<(usize, usize, usize)> {
        let (b, c, plane) = channel_view(self.shape(x));
        let gs = self.shape(gamma);
        let rows = gs.iter().product::<usize>() / c.max(1);
        if gs.iter().product::<usize>() != rows * c || self.shape(beta) != gs || labels.len() != b {
            return Err(shape_err("normalization", &[rows, c], gs));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= rows) {
            return Err(NnError::ConditionOutOfRange {
                label: l,
                num_conditions: rows,
            });
        }
        Ok((b, c, plane))
    }

    /// Training-mode (conditional) batch normalization. `gamma`/`beta` are
    /// `(conditions, channels)` tables and `labels` picks a row per sample;
    /// plain batch norm is the single-row case with all labels zero.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        labels: &[usize],
        epsilon: f64,
    ) -> Result<(Var, BatchStats)> {
        let (b, c, plane) = self.check_norm(x, gamma, beta, labels)?;
        let count = b * plane;
        let xv = self.value(x).data();
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        for ch in 0..c {
            let mut s = 0.0;
            for bi in 0..b {
                s += xv[(bi * c + ch) * plane..][..plane].iter().sum::<f64>();
            }
            let m = s / count as f64;
            let mut s2 = 0.0;
            for bi in 0..b {
                s2 += xv[(bi * c + ch) * plane..][..plane]
                    .iter()
                    .map(|&v| (v - m) * (v - m))
                    .sum::<f64>();
            }
            mean[ch] = m;
            var[ch] = s2 / count as f64;
        }
        let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + epsilon).sqrt()).collect();
        let (out, xhat) = self.normalize(x, gamma, beta, labels, &mean, &inv_std, (b, c, plane));
        let rg = self.rg(&[x, gamma, beta]);
        let shape = self.shape(x).to_vec();
        let v = self.push(
            Tensor::raw(shape, out),
            Op::Norm {
                x,
                gamma,
                beta,
                labels: labels.to_vec(),
                xhat,
                inv_std,
                batch_stats: true,
            },
            rg,
        );
        Ok((v, BatchStats { mean, var, count }))
    }

    /// Inference-mode normalization with fixed statistics.
    #[allow(clippy::too_many_arguments)]
    pub fn batch_norm_fixed(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        labels: &[usize],
        mean: &[f64],
        var: &[f64],
        epsilon: f64,
    ) -> Result<Var> {
        let dims = self.check_norm(x, gamma, beta, labels)?;
        let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + epsilon).sqrt()).collect();
        let (out, xhat) = self.normalize(x, gamma, beta, labels, mean, &inv_std, dims);
        let rg = self.rg(&[x, gamma, beta]);
        let shape = self.shape(x).to_vec();
        Ok(self.push(
            Tensor::raw(shape, out),
            Op::Norm {
                x,
                gamma,
                beta,
                labels: labels.to_vec(),
                xhat,
                inv_std,
                batch_stats: false,
            },
            rg,
        ))
    }

    #[allow(clippy::too_many_arguments)]
    fn normalize(
        &self,
        x: Var,
        gamma: Var,
        beta: Var,
        labels: &[usize],
        mean: &[f64],
        inv_std: &[f64],
        (b, c, plane): (usize, usize, usize),
    ) -> (Vec<f64>, Vec<f64>) {
        let xv = self.value(x).data();
        let (gv, bv) = (self.value(gamma).data(), self.value(beta).data());
        let mut out = vec![0.0; xv.len()];
        let mut xhat = vec![0.0; xv.len()];
        for (bi, &label) in labels.iter().enumerate().take(b) {
            let row = label * c;
            for ch in 0..c {
                let o = (bi * c + ch) * plane;
                for i in o..o + plane {
                    let h = (xv[i] - mean[ch]) * inv_std[ch];
                    xhat[i] = h;
                    out[i] = gv[row + ch] * h + bv[row + ch];
                }
            }
        }
        (out, xhat)
    }

    /// Mean binary cross-entropy with predictions clamped to
    /// `[BCE_CLAMP, 1 - BCE_CLAMP]`.
    pub fn bce(&mut self, p: Var, targets: &[f64]) -> Result<Var> {
        let pv = self.value(p);
        if pv.len() != targets.len() {
            return Err(shape_err("bce", &[targets.len()], pv.shape()));
        }
        if targets.is_empty() {
            return Err(NnError::EmptyBatch);
        }
        let loss = pv
            .data()
            .iter()
            .zip(targets)
            .map(|(&p, &t)| {
                let p = p.clamp(crate::BCE_CLAMP, 1.0 - crate::BCE_CLAMP);
                -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
            })
            .sum::<f64>()
            / targets.len() as f64;
        let rg = self.rg(&[p]);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::Bce {
                p,
                targets: targets.to_vec(),
            },
            rg,
        ))
    }

    /// Reverse sweep from a scalar output. Consumes the graph.
    pub fn backward(self, output: Var) -> Result<Gradients> {
        let out_len = self.nodes[output.0].value.len();
        if out_len != 1 {
            return Err(NnError::NonScalarOutput(self.nodes[output.0].value.shape().to_vec()));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = (0..n).map(|_| None).collect();
        if self.nodes[output.0].requires_grad {
            grads[output.0] = Some(vec![1.0]);
        }
        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(g);
                continue;
            }
            self.propagate(node, &g, &mut grads);
        }
        // only leaves keep gradients
        for (i, node) in self.nodes.iter().enumerate() {
            if !matches!(node.op, Op::Leaf) || !node.requires_grad {
                grads[i] = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn acc(&self, grads: &mut [Option<Vec<f64>>], v: Var, f: impl FnOnce(&mut [f64])) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        let slot = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.len()]);
        f(slot);
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.acc(grads, *a, |s| s.iter_mut().zip(g).for_each(|(s, g)| *s += g));
                self.acc(grads, *b, |s| s.iter_mut().zip(g).for_each(|(s, g)| *s += g));
            }
            Op::Sub(a, b) => {
                self.acc(grads, *a, |s| s.iter_mut().zip(g).for_each(|(s, g)| *s += g));
                self.acc(grads, *b, |s| s.iter_mut().zip(g).for_each(|(s, g)| *s -= g));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                self.acc(grads, *a, |s| {
                    for i in 0..s.len() {
                        s[i] += g[i] * vb[i];
                    }
                });
                self.acc(grads, *b, |s| {
                    for i in 0..s.len() {
                        s[i] += g[i] * va[i];
                    }
                });
            }
            Op::Div(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                self.acc(grads, *a, |s| {
                    for i in 0..s.len() {
                        s[i] += g[i] / vb[i];
                    }
                });
                self.acc(grads, *b, |s| {
                    for i in 0..s.len() {
                        s[i] -= g[i] * va[i] / (vb[i] * vb[i]);
                    }
                });
            }
            Op::Affine(x, scale) => {
                self.acc(grads, *x, |s| s.iter_mut().zip(g).for_each(|(s, g)| *s += scale * g));
            }
            Op::Broadcast(x) => {
                let total: f64 = g.iter().sum();
                self.acc(grads, *x, |s| s[0] += total);
            }
            Op::Sum(x) => {
                self.acc(grads, *x, |s| s.iter_mut().for_each(|s| *s += g[0]));
            }
            Op::Mean(x) => {
                let n = self.value(*x).len() as f64;
                self.acc(grads, *x, |s| s.iter_mut().for_each(|s| *s += g[0] / n));
            }
            Op::Unary(x, f) => {
                let (xv, yv) = (self.value(*x).data(), node.value.data());
                self.acc(grads, *x, |s| {
                    for i in 0..s.len() {
                        s[i] += g[i] * f.derivative(xv[i], yv[i]);
                    }
                });
            }
            Op::Gather(x, index) => {
                self.acc(grads, *x, |s| {
                    for (gi, &src) in g.iter().zip(index) {
                        s[src] += gi;
                    }
                });
            }
            Op::Reshape(x) => {
                self.acc(grads, *x, |s| s.iter_mut().zip(g).for_each(|(s, g)| *s += g));
            }
            Op::Concat(parts) => {
                let (b, c_total, plane) = channel_view(node.value.shape());
                let mut offset = 0;
                for &p in parts {
                    let (_, pc, _) = channel_view(self.shape(p));
                    self.acc(grads, p, |s| {
                        for bi in 0..b {
                            let src = &g[(bi * c_total + offset) * plane..][..pc * plane];
                            let dst = &mut s[bi * pc * plane..][..pc * plane];
                            dst.iter_mut().zip(src).for_each(|(d, g)| *d += g);
                        }
                    });
                    offset += pc;
                }
            }
            Op::Dense { x, w, b } => {
                let (xs, ws) = (self.shape(*x), self.shape(*w));
                let (batch, inf, outf) = (xs[0], ws[1], ws[0]);
                let (xv, wv) = (self.value(*x).data(), self.value(*w).data());
                self.acc(grads, *x, |s| gemm(batch, outf, inf, 1.0, g, false, wv, false, 1.0, s));
                self.acc(grads, *w, |s| gemm(outf, batch, inf, 1.0, g, true, xv, false, 1.0, s));
                self.acc(grads, *b, |s| {
                    for row in g.chunks(outf) {
                        s.iter_mut().zip(row).for_each(|(s, g)| *s += g);
                    }
                });
            }
            Op::Conv { x, w, b, win, cols } => {
                let cout = self.shape(*w)[0];
                let plane = win.grid_h * win.grid_w;
                let gcm = kernels::batch_to_channel_major(g, win.batch, cout, plane);
                let n = win.cols();
                let k = win.rows();
                self.acc(grads, *w, |s| gemm(cout, n, k, 1.0, &gcm, false, cols, true, 1.0, s));
                self.acc(grads, *b, |s| {
                    for (c, s) in s.iter_mut().enumerate() {
                        *s += gcm[c * n..(c + 1) * n].iter().sum::<f64>();
                    }
                });
                if self.nodes[x.0].requires_grad {
                    let wv = self.value(*w).data();
                    let mut dcols = vec![0.0; k * n];
                    gemm(k, cout, n, 1.0, wv, true, &gcm, false, 0.0, &mut dcols);
                    let dx = kernels::col2im(win, &dcols);
                    self.acc(grads, *x, |s| s.iter_mut().zip(&dx).for_each(|(s, d)| *s += d));
                }
            }
            Op::ConvT { x, w, b, win, xm } => {
                let cin = self.shape(*x)[1];
                let dcols = kernels::im2col(win, g);
                let (k, n) = (win.rows(), win.cols());
                self.acc(grads, *w, |s| gemm(cin, n, k, 1.0, xm, false, &dcols, true, 1.0, s));
                let plane = win.img_h * win.img_w;
                self.acc(grads, *b, |s| {
                    for bi in 0..win.batch {
                        for (c, s) in s.iter_mut().enumerate() {
                            *s += g[(bi * win.channels + c) * plane..][..plane].iter().sum::<f64>();
                        }
                    }
                });
                if self.nodes[x.0].requires_grad {
                    let wv = self.value(*w).data();
                    let mut dxm = vec![0.0; cin * n];
                    gemm(cin, k, n, 1.0, wv, false, &dcols, false, 0.0, &mut dxm);
                    let dx = kernels::channel_to_batch_major(&dxm, win.batch, cin, win.grid_h * win.grid_w);
                    self.acc(grads, *x, |s| s.iter_mut().zip(&dx).for_each(|(s, d)| *s += d));
                }
            }
            Op::Norm {
                x,
                gamma,
                beta,
                labels,
                xhat,
                inv_std,
                batch_stats,
            } => {
                let (b, c, plane) = channel_view(node.value.shape());
                let gv = self.value(*gamma).data();
                self.acc(grads, *gamma, |s| {
                    for bi in 0..b {
                        for ch in 0..c {
                            let o = (bi * c + ch) * plane;
                            s[labels[bi] * c + ch] +=
                                (o..o + plane).map(|i| g[i] * xhat[i]).sum::<f64>();
                        }
                    }
                });
                self.acc(grads, *beta, |s| {
                    for bi in 0..b {
                        for ch in 0..c {
                            let o = (bi * c + ch) * plane;
                            s[labels[bi] * c + ch] += g[o..o + plane].iter().sum::<f64>();
                        }
                    }
                });
                if !self.nodes[x.0].requires_grad {
                    return;
                }
                // gradient w.r.t. the normalized activations
                let mut dxhat = vec![0.0; g.len()];
                for bi in 0..b {
                    for ch in 0..c {
                        let gamma = gv[labels[bi] * c + ch];
                        let o = (bi * c + ch) * plane;
                        for i in o..o + plane {
                            dxhat[i] = g[i] * gamma;
                        }
                    }
                }
                let count = (b * plane) as f64;
                self.acc(grads, *x, |s| {
                    #[allow(clippy::needless_range_loop)]
                    for ch in 0..c {
                        let (mut sum_d, mut sum_dx) = (0.0, 0.0);
                        if *batch_stats {
                            for bi in 0..b {
                                let o = (bi * c + ch) * plane;
                                for i in o..o + plane {
                                    sum_d += dxhat[i];
                                    sum_dx += dxhat[i] * xhat[i];
                                }
                            }
                        }
                        for bi in 0..b {
                            let o = (bi * c + ch) * plane;
                            for i in o..o + plane {
                                s[i] += if *batch_stats {
                                    inv_std[ch] / count * (count * dxhat[i] - sum_d - xhat[i] * sum_dx)
                                } else {
                                    inv_std[ch] * dxhat[i]
                                };
                            }
                        }
                    }
                });
            }
            Op::Bce { p, targets } => {
                let pv = self.value(*p).data();
                let n = targets.len() as f64;
                self.acc(grads, *p, |s| {
                    for i in 0..s.len() {
                        let q = pv[i].clamp(crate::BCE_CLAMP, 1.0 - crate::BCE_CLAMP);
                        let t = targets[i];
                        s[i] += g[0] * (-(t / q) + (1.0 - t) / (1.0 - q)) / n;
                    }
                });
            }
        }
    }
}

fn add_channel_bias(out: &mut [f64], bias: &[f64], batch: usize, channels: usize, plane: usize) {
    for b in 0..batch {
        for (c, &bv) in bias.iter().enumerate().take(channels) {
            out[(b * channels + c) * plane..][..plane].iter_mut().for_each(|v| *v += bv);
        }
    }
}
