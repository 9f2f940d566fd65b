//! Tape-based reverse-mode differentiation over a fixed operator set.
//!
//! Nodes are appended in evaluation order, so a reverse sweep over node ids
//! is a valid topological order for the backward pass.

use crate::conv::ConvGeometry;
use crate::error::{dim_err, NnError, Result};
use crate::tensor::Tensor;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Conv {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        geom: ConvGeometry,
    },
    Linear {
        input: Var,
        weight: Var,
        bias: Var,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine {
        input: Var,
        scale: f64,
    },
    Sigmoid(Var),
    Relu(Var),
    Abs(Var),
    Square(Var),
    Log(Var),
    InstanceNorm {
        input: Var,
        scale: Var,
        shift: Var,
        /// Standardized input, kept for the backward pass.
        normalized: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Shuffle1d {
        input: Var,
        factor: usize,
    },
    Reshape(Var),
    Mean(Var),
    Sum(Var),
    MeanLastAxis(Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
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

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Adds a leaf. Gradients are tracked iff `tensor.requires_grad()`.
    pub fn leaf(&mut self, tensor: Tensor) -> Var {
        let needs = tensor.requires_grad();
        self.push(tensor, Op::Leaf, needs)
    }

    /// Adds an untracked leaf (no gradient flows into it).
    pub fn constant(&mut self, tensor: Tensor) -> Var {
        let t = tensor.with_requires_grad(false);
        self.push(t, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    /// Gradient of the last `backward` loss with respect to `v`, if it was reached.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn grad_tensor(&self, v: Var) -> Option<Tensor> {
        self.grad(v)
            .map(|g| Tensor::new(self.shape(v), g.to_vec()).expect("grad shape"))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(dim_err(op, "all axes", self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    fn unary(&mut self, input: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let src = &self.nodes[input.0].value;
        let data = src.data().iter().map(|&x| f(x)).collect();
        let value = Tensor::new(src.shape(), data).expect("unary shape");
        let needs = self.needs(input);
        self.push(value, op, needs)
    }

    fn binary(&mut self, name: &'static str, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        self.same_shape(name, a, b)?;
        let data = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let value = Tensor::new(self.shape(a), data)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, op, needs))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, Op::Mul(a, b), |x, y| x * y)
    }

    /// `scale * x + offset`, elementwise.
    pub fn affine(&mut self, x: Var, scale: f64, offset: f64) -> Var {
        self.unary(x, Op::Affine { input: x, scale }, |v| scale * v + offset)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, Op::Sigmoid(x), sigmoid)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, Op::Relu(x), |v| v.max(0.0))
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.unary(x, Op::Abs(x), f64::abs)
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, Op::Square(x), |v| v * v)
    }

    pub fn ln(&mut self, x: Var) -> Var {
        self.unary(x, Op::Log(x), f64::ln)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let d = self.data(x);
        let m = d.iter().sum::<f64>() / d.len() as f64;
        let needs = self.needs(x);
        self.push(Tensor::scalar(m), Op::Mean(x), needs)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.data(x).iter().sum::<f64>();
        let needs = self.needs(x);
        self.push(Tensor::scalar(s), Op::Sum(x), needs)
    }

    /// Averages over the trailing axis: `[.., W] -> [..]`.
    pub fn mean_last_axis(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let Some((&w, lead)) = shape.split_last() else {
            return Err(NnError::Usage("mean_last_axis on a scalar".into()));
        };
        let data = self
            .data(x)
            .chunks(w)
            .map(|c| c.iter().sum::<f64>() / w as f64)
            .collect();
        let value = Tensor::new(lead, data)?;
        let needs = self.needs(x);
        Ok(self.push(value, Op::MeanLastAxis(x), needs))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = Tensor::new(shape, self.data(x).to_vec())
            .map_err(|_| dim_err("reshape", "element count", self.shape(x), shape))?;
        let needs = self.needs(x);
        Ok(self.push(value, Op::Reshape(x), needs))
    }

    /// Strided convolution with "same" zero padding.
    ///
    /// `input` is `[C_in, T]` (1-D, kernel height must be 1) or `[C_in, H, W]`;
    /// `weight` is `[C_out, C_in, kh, kw]`; `bias` is `[C_out]`.
    /// The output keeps the input's rank.
    pub fn conv(&mut self, input: Var, weight: Var, bias: Option<Var>, stride: (usize, usize)) -> Result<Var> {
        let ishape = self.shape(input).to_vec();
        let wshape = self.shape(weight).to_vec();
        if wshape.len() != 4 {
            return Err(dim_err("conv", "weight rank", &[4], &[wshape.len()]));
        }
        let (cout, cin, kh, kw) = (wshape[0], wshape[1], wshape[2], wshape[3]);
        let (c, h, w) = match ishape.as_slice() {
            &[c, t] => (c, 1, t),
            &[c, h, w] => (c, h, w),
            _ => return Err(dim_err("conv", "input rank", &[3], &[ishape.len()])),
        };
        if c != cin {
            return Err(dim_err("conv", "input channels (axis 0) vs weight axis 1", &[cin], &[c]));
        }
        if ishape.len() == 2 && kh != 1 {
            return Err(dim_err("conv", "kernel height for 1-D input", &[1], &[kh]));
        }
        if h == 0 || w == 0 {
            return Err(dim_err("conv", "spatial axes", &[1, 1], &[h, w]));
        }
        if stride.0 == 0 || stride.1 == 0 {
            return Err(NnError::Config {
                op: "conv",
                reason: "stride must be positive".into(),
            });
        }
        if let Some(b) = bias {
            if self.shape(b) != [cout] {
                return Err(dim_err("conv", "bias length", &[cout], self.shape(b)));
            }
        }
        let geom = ConvGeometry::same(cin, h, w, cout, (kh, kw), stride);
        let out = geom.forward(self.data(input), self.data(weight), bias.map(|b| self.data(b)));
        let oshape = if ishape.len() == 2 {
            vec![cout, geom.out_w]
        } else {
            vec![cout, geom.out_h, geom.out_w]
        };
        let needs = self.needs(input) || self.needs(weight) || bias.is_some_and(|b| self.needs(b));
        let value = Tensor::new(&oshape, out)?;
        Ok(self.push(
            value,
            Op::Conv {
                input,
                weight,
                bias,
                geom,
            },
            needs,
        ))
    }

    /// Fully connected layer over the flattened input: `weight` is `[out, n]`.
    pub fn linear(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let n = self.value(input).len();
        let ws = self.shape(weight).to_vec();
        if ws.len() != 2 || ws[1] != n {
            return Err(dim_err("linear", "weight [out, in]", &[ws.first().copied().unwrap_or(0), n], &ws));
        }
        if self.shape(bias) != [ws[0]] {
            return Err(dim_err("linear", "bias length", &[ws[0]], self.shape(bias)));
        }
        let mut out = self.data(bias).to_vec();
        crate::conv::gemm(ws[0], n, 1, self.data(weight), false, self.data(input), false, &mut out, 1.0);
        let needs = self.needs(input) || self.needs(weight) || self.needs(bias);
        let value = Tensor::new(&[ws[0]], out)?;
        Ok(self.push(value, Op::Linear { input, weight, bias }, needs))
    }

    /// Per-channel standardization over all non-channel axes, then
    /// `scale[c] * x_hat + shift[c]`.
    pub fn instance_norm(&mut self, input: Var, scale: Var, shift: Var, eps: f64) -> Result<Var> {
        if eps <= 0.0 {
            return Err(NnError::Config {
                op: "instance_norm",
                reason: format!("eps must be positive, got {eps}"),
            });
        }
        let shape = self.shape(input).to_vec();
        if shape.len() < 2 {
            return Err(dim_err("instance_norm", "input rank", &[2], &[shape.len()]));
        }
        let c = shape[0];
        if self.shape(scale) != [c] {
            return Err(dim_err("instance_norm", "scale length vs channels", &[c], self.shape(scale)));
        }
        if self.shape(shift) != [c] {
            return Err(dim_err("instance_norm", "shift length vs channels", &[c], self.shape(shift)));
        }
        let n = self.value(input).len() / c;
        let x = self.data(input);
        let (g, b) = (self.data(scale), self.data(shift));
        let mut normalized = vec![0.0; x.len()];
        let mut inv_std = vec![0.0; c];
        let mut out = vec![0.0; x.len()];
        for ch in 0..c {
            let xs = &x[ch * n..(ch + 1) * n];
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[ch] = is;
            for i in 0..n {
                let xh = (xs[i] - mean) * is;
                normalized[ch * n + i] = xh;
                out[ch * n + i] = g[ch] * xh + b[ch];
            }
        }
        let needs = self.needs(input) || self.needs(scale) || self.needs(shift);
        let value = Tensor::new(&shape, out)?;
        Ok(self.push(
            value,
            Op::InstanceNorm {
                input,
                scale,
                shift,
                normalized,
                inv_std,
            },
            needs,
        ))
    }

    /// Sub-pixel rearrangement `[C, T] -> [C/r, r*T]` with
    /// `out[c][r*t + i] = in[c*r + i][t]`.
    pub fn shuffle1d(&mut self, input: Var, factor: usize) -> Result<Var> {
        let shape = self.shape(input).to_vec();
        let &[c, t] = shape.as_slice() else {
            return Err(dim_err("shuffle1d", "input rank", &[2], &[shape.len()]));
        };
        if factor == 0 || c % factor != 0 {
            return Err(NnError::Config {
                op: "shuffle1d",
                reason: format!("channel count {c} is not divisible by factor {factor}"),
            });
        }
        let data = shuffle_forward(self.data(input), c, t, factor);
        let value = Tensor::new(&[c / factor, t * factor], data)?;
        let needs = self.needs(input);
        Ok(self.push(value, Op::Shuffle1d { input, factor }, needs))
    }

    /// Runs the reverse sweep from a scalar `loss`, replacing any earlier gradients.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(NnError::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            if !self.nodes[id].needs_grad {
                continue;
            }
            self.propagate(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        for (id, g) in grads.iter_mut().enumerate() {
            if !self.nodes[id].needs_grad {
                *g = None;
            }
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(&self, id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[id];
        let out = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.acc(grads, *a, |d| axpy(d, 1.0, g));
                self.acc(grads, *b, |d| axpy(d, 1.0, g));
            }
            Op::Sub(a, b) => {
                self.acc(grads, *a, |d| axpy(d, 1.0, g));
                self.acc(grads, *b, |d| axpy(d, -1.0, g));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.data(*a), self.data(*b));
                self.acc(grads, *a, |d| {
                    for i in 0..d.len() {
                        d[i] += g[i] * bv[i];
                    }
                });
                self.acc(grads, *b, |d| {
                    for i in 0..d.len() {
                        d[i] += g[i] * av[i];
                    }
                });
            }
            Op::Affine { input, scale } => self.acc(grads, *input, |d| axpy(d, *scale, g)),
            Op::Sigmoid(x) => self.acc(grads, *x, |d| {
                for i in 0..d.len() {
                    d[i] += g[i] * out[i] * (1.0 - out[i]);
                }
            }),
            Op::Relu(x) => {
                let xv = self.data(*x);
                self.acc(grads, *x, |d| {
                    for i in 0..d.len() {
                        if xv[i] > 0.0 {
                            d[i] += g[i];
                        }
                    }
                })
            }
            Op::Abs(x) => {
                let xv = self.data(*x);
                self.acc(grads, *x, |d| {
                    for i in 0..d.len() {
                        d[i] += g[i] * sign(xv[i]);
                    }
                })
            }
            Op::Square(x) => {
                let xv = self.data(*x);
                self.acc(grads, *x, |d| {
                    for i in 0..d.len() {
                        d[i] += 2.0 * g[i] * xv[i];
                    }
                })
            }
            Op::Log(x) => {
                let xv = self.data(*x);
                self.acc(grads, *x, |d| {
                    for i in 0..d.len() {
                        d[i] += g[i] / xv[i];
                    }
                })
            }
            Op::Mean(x) => {
                let n = self.value(*x).len() as f64;
                self.acc(grads, *x, |d| d.iter_mut().for_each(|v| *v += g[0] / n))
            }
            Op::Sum(x) => self.acc(grads, *x, |d| d.iter_mut().for_each(|v| *v += g[0])),
            Op::MeanLastAxis(x) => {
                let w = *self.shape(*x).last().expect("rank >= 1");
                self.acc(grads, *x, |d| {
                    for (row, gi) in d.chunks_mut(w).zip(g) {
                        row.iter_mut().for_each(|v| *v += gi / w as f64);
                    }
                })
            }
            Op::Reshape(x) => self.acc(grads, *x, |d| axpy(d, 1.0, g)),
            Op::Shuffle1d { input, factor } => {
                let s = self.shape(*input);
                let (c, t) = (s[0], s[1]);
                let back = shuffle_inverse(g, c / factor, t * factor, *factor);
                self.acc(grads, *input, |d| axpy(d, 1.0, &back));
            }
            Op::InstanceNorm {
                input,
                scale,
                shift,
                normalized,
                inv_std,
            } => {
                let c = inv_std.len();
                let n = normalized.len() / c;
                let gamma = self.data(*scale);
                self.acc(grads, *shift, |d| {
                    for ch in 0..c {
                        d[ch] += g[ch * n..(ch + 1) * n].iter().sum::<f64>();
                    }
                });
                self.acc(grads, *scale, |d| {
                    for ch in 0..c {
                        let r = ch * n..(ch + 1) * n;
                        d[ch] += g[r.clone()].iter().zip(&normalized[r]).map(|(a, b)| a * b).sum::<f64>();
                    }
                });
                self.acc(grads, *input, |d| {
                    for ch in 0..c {
                        let r = ch * n..(ch + 1) * n;
                        let gs = &g[r.clone()];
                        let xh = &normalized[r.clone()];
                        let mean_g = gs.iter().sum::<f64>() / n as f64;
                        let mean_gx = gs.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / n as f64;
                        let k = gamma[ch] * inv_std[ch];
                        for (i, di) in d[r].iter_mut().enumerate() {
                            *di += k * (gs[i] - mean_g - xh[i] * mean_gx);
                        }
                    }
                });
            }
            Op::Conv {
                input,
                weight,
                bias,
                geom,
            } => {
                let xin = self.data(*input);
                let wv = self.data(*weight);
                let mut gi = self.needs(*input).then(|| vec![0.0; xin.len()]);
                let mut gw = self.needs(*weight).then(|| vec![0.0; wv.len()]);
                let mut gb = bias.filter(|b| self.needs(*b)).map(|b| vec![0.0; self.value(b).len()]);
                geom.backward(xin, wv, g, gi.as_deref_mut(), gw.as_deref_mut(), gb.as_deref_mut());
                if let Some(v) = gi {
                    self.acc(grads, *input, |d| axpy(d, 1.0, &v));
                }
                if let Some(v) = gw {
                    self.acc(grads, *weight, |d| axpy(d, 1.0, &v));
                }
                if let (Some(v), Some(b)) = (gb, bias) {
                    self.acc(grads, *b, |d| axpy(d, 1.0, &v));
                }
            }
            Op::Linear { input, weight, bias } => {
                let xin = self.data(*input);
                let wv = self.data(*weight);
                let (o, n) = (g.len(), xin.len());
                self.acc(grads, *bias, |d| axpy(d, 1.0, g));
                self.acc(grads, *weight, |d| {
                    for r in 0..o {
                        axpy(&mut d[r * n..(r + 1) * n], g[r], xin);
                    }
                });
                self.acc(grads, *input, |d| {
                    for r in 0..o {
                        axpy(d, g[r], &wv[r * n..(r + 1) * n]);
                    }
                });
            }
        }
    }

    fn acc(&self, grads: &mut [Option<Vec<f64>>], v: Var, f: impl FnOnce(&mut [f64])) {
        if !self.needs(v) {
            return;
        }
        let buf = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.len()]);
        f(buf);
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

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[inline]
fn axpy(dst: &mut [f64], a: f64, src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += a * s;
    }
}

/// `[c, t]` row-major to `[c / r, r * t]`.
pub fn shuffle_forward(x: &[f64], c: usize, t: usize, r: usize) -> Vec<f64> {
    let oc = c / r;
    let mut out = vec![0.0; x.len()];
    for co in 0..oc {
        for ti in 0..t {
            for i in 0..r {
                out[co * r * t + r * ti + i] = x[(co * r + i) * t + ti];
            }
        }
    }
    out
}

/// Inverse of [`shuffle_forward`]: `[c, w]` (with `w = r * t`) back to `[c * r, t]`.
pub fn shuffle_inverse(y: &[f64], c: usize, w: usize, r: usize) -> Vec<f64> {
    let t = w / r;
    let mut out = vec![0.0; y.len()];
    for co in 0..c {
        for ti in 0..t {
            for i in 0..r {
                out[(co * r + i) * t + ti] = y[co * w + r * ti + i];
            }
        }
    }
    out
}
