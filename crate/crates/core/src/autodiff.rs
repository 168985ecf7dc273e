//! Minimal reverse-mode automatic differentiation.
//!
//! A [`Tape`] records primitive operations as they execute. Every recorded
//! value is a node; [`Tape::backward`] walks the nodes in reverse insertion
//! order (which is a topological order) and returns exact gradients for every
//! leaf created with [`Tape::leaf`]. Leaves created with [`Tape::constant`]
//! and everything computed only from constants receive no gradient and cost
//! nothing during the backward pass.
//!
//! A tape is single-use: build it, run one forward pass, call `backward`,
//! drop it.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    idx: usize,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Affine { w: usize, b: usize, x: usize },
    Conv2d { k: usize, b: Option<usize>, x: usize, stride: usize, padding: usize },
    LeakyRelu { x: usize, slope: f64 },
    LogSumExp { x: usize },
    Add { a: usize, b: usize },
    Sub { a: usize, b: usize },
    Mul { a: usize, b: usize },
    Scale { x: usize, c: f64 },
    Sum { x: usize },
    Mean { x: usize },
    Reshape { x: usize },
    MeanPool { x: usize },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Record of executed operations for one forward pass.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Conv2d geometry, shared by forward and backward.
#[derive(Debug, Clone, Copy)]
struct ConvGeom {
    batch: usize,
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    k: usize,
    stride: usize,
    padding: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeom {
    /// Rows of the unfolded input: one per (input channel, ky, kx).
    fn patch_len(&self) -> usize {
        self.c_in * self.k * self.k
    }

    fn positions(&self) -> usize {
        self.oh * self.ow
    }

    /// Calls `f(patch_row, position, channel, plane_offset)` for every kernel
    /// tap that lands inside the input; padded taps are skipped.
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize, usize)) {
        for ci in 0..self.c_in {
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let r = (ci * self.k + ky) * self.k + kx;
                    for oy in 0..self.oh {
                        let iy = (oy * self.stride + ky) as isize - self.padding as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        for ox in 0..self.ow {
                            let ix = (ox * self.stride + kx) as isize - self.padding as isize;
                            if ix >= 0 && ix < self.w as isize {
                                f(r, oy * self.ow + ox, ci, iy as usize * self.w + ix as usize);
                            }
                        }
                    }
                }
            }
        }
    }

    /// Unfolds one sample `[C_in, H, W]` into `[patch_len, positions]`.
    fn im2col(&self, x: &[f64], cols: &mut [f64]) {
        cols.fill(0.0);
        let (p, hw) = (self.positions(), self.h * self.w);
        self.for_each_tap(|r, pos, ci, off| cols[r * p + pos] = x[ci * hw + off]);
    }

    /// Adjoint of `im2col`: scatters columns back onto the input plane.
    fn col2im(&self, cols: &[f64], x: &mut [f64]) {
        let (p, hw) = (self.positions(), self.h * self.w);
        self.for_each_tap(|r, pos, ci, off| x[ci * hw + off] += cols[r * p + pos]);
    }
}

/// Output spatial size of a convolution, or a configuration error when the
/// geometry does not tile exactly.
pub fn conv_output_size(size: usize, k: usize, stride: usize, padding: usize) -> Result<usize> {
    if stride == 0 {
        return Err(Error::Config("conv2d stride must be positive".into()));
    }
    let padded = size + 2 * padding;
    if k == 0 || k > padded {
        return Err(Error::Config(format!("kernel {k} does not fit padded size {padded}")));
    }
    if (padded - k) % stride != 0 {
        return Err(Error::Config(format!(
            "conv2d output size ({padded}-{k})/{stride}+1 is not integral"
        )));
    }
    Ok((padded - k) / stride + 1)
}

impl Tape {
    pub fn new() -> Self {
        Self { id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed), nodes: Vec::new() }
    }

    /// A differentiable input (parameter or input point).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A value that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        assert_eq!(v.tape, self.id, "variable belongs to a different tape");
        &self.nodes[v.idx].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var { tape: self.id, idx: self.nodes.len() - 1 }
    }

    fn check(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.idx >= self.nodes.len() {
            return Err(Error::Usage("variable is not recorded on this tape".into()));
        }
        Ok(v.idx)
    }

    fn grad_flag(&self, ids: &[usize]) -> bool {
        ids.iter().any(|&i| self.nodes[i].requires_grad)
    }

    /// `output = weights · input + bias` for one input `[N]` or a batch `[B, N]`.
    pub fn affine(&mut self, weights: Var, bias: Var, input: Var) -> Result<Var> {
        let (w, b, x) = (self.check(weights)?, self.check(bias)?, self.check(input)?);
        let (wt, bt, xt) = (&self.nodes[w].value, &self.nodes[b].value, &self.nodes[x].value);
        if wt.ndim() != 2 {
            return Err(Error::Dimension(format!("affine weights must be 2-D, got {:?}", wt.shape())));
        }
        let (k, n) = (wt.shape()[0], wt.shape()[1]);
        if bt.shape() != [k] {
            return Err(Error::Dimension(format!("affine bias {:?} does not match {k} outputs", bt.shape())));
        }
        let (batch, out_shape) = match xt.shape() {
            [m] if *m == n => (1, vec![k]),
            [bs, m] if *m == n => (*bs, vec![*bs, k]),
            s => {
                return Err(Error::Dimension(format!("affine input {s:?} does not match {n} features")))
            }
        };
        let (wd, bd, xd) = (wt.data(), bt.data(), xt.data());
        let mut out = vec![0.0; batch * k];
        for r in 0..batch {
            let xr = &xd[r * n..(r + 1) * n];
            for (o, orow) in out[r * k..(r + 1) * k].iter_mut().enumerate() {
                let wr = &wd[o * n..(o + 1) * n];
                *orow = wr.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>() + bd[o];
            }
        }
        let rg = self.grad_flag(&[w, b, x]);
        Ok(self.push(Tensor::new(out_shape, out)?, Op::Affine { w, b, x }, rg))
    }

    fn conv_geom(&self, k: usize, x: usize, stride: usize, padding: usize) -> Result<(ConvGeom, Vec<usize>)> {
        let (kt, xt) = (&self.nodes[k].value, &self.nodes[x].value);
        let [c_out, kc_in, kh, kw] = kt.shape() else {
            return Err(Error::Dimension(format!("conv2d kernel must be 4-D, got {:?}", kt.shape())));
        };
        if kh != kw {
            return Err(Error::Dimension("conv2d kernel must be square".into()));
        }
        let (batch, c_in, h, w, batched) = match xt.shape() {
            [c, h, w] => (1, *c, *h, *w, false),
            [b, c, h, w] => (*b, *c, *h, *w, true),
            s => return Err(Error::Dimension(format!("conv2d input must be 3-D or 4-D, got {s:?}"))),
        };
        if c_in != *kc_in {
            return Err(Error::Dimension(format!("conv2d expects {kc_in} channels, got {c_in}")));
        }
        let oh = conv_output_size(h, *kh, stride, padding)?;
        let ow = conv_output_size(w, *kw, stride, padding)?;
        let geom = ConvGeom { batch, c_in, h, w, c_out: *c_out, k: *kh, stride, padding, oh, ow };
        let shape = if batched { vec![batch, *c_out, oh, ow] } else { vec![*c_out, oh, ow] };
        Ok((geom, shape))
    }

    /// Cross-correlation of `[C_in, H, W]` (or a batch `[B, C_in, H, W]`) with
    /// a `[C_out, C_in, k, k]` kernel.
    pub fn conv2d(
        &mut self,
        kernel: Var,
        bias: Option<Var>,
        input: Var,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let (k, x) = (self.check(kernel)?, self.check(input)?);
        let b = bias.map(|v| self.check(v)).transpose()?;
        let (g, shape) = self.conv_geom(k, x, stride, padding)?;
        if let Some(b) = b {
            if self.nodes[b].value.shape() != [g.c_out] {
                return Err(Error::Dimension("conv2d bias must have one entry per output channel".into()));
            }
        }
        let kd = self.nodes[k].value.data();
        let xd = self.nodes[x].value.data();
        let (rlen, p) = (g.patch_len(), g.positions());
        let mut out = vec![0.0; g.batch * g.c_out * p];
        let mut cols = vec![0.0; rlen * p];
        for bi in 0..g.batch {
            g.im2col(&xd[bi * g.c_in * g.h * g.w..][..g.c_in * g.h * g.w], &mut cols);
            for co in 0..g.c_out {
                let oplane = &mut out[(bi * g.c_out + co) * p..][..p];
                if let Some(b) = b {
                    oplane.fill(self.nodes[b].value.data()[co]);
                }
                for (r, &wv) in kd[co * rlen..(co + 1) * rlen].iter().enumerate() {
                    for (o, &c) in oplane.iter_mut().zip(&cols[r * p..(r + 1) * p]) {
                        *o += wv * c;
                    }
                }
            }
        }
        let mut ids = vec![k, x];
        ids.extend(b);
        let rg = self.grad_flag(&ids);
        Ok(self.push(Tensor::new(shape, out)?, Op::Conv2d { k, b, x, stride, padding }, rg))
    }

    /// Elementwise `max(x, slope * x)`.
    pub fn leaky_relu(&mut self, input: Var, slope: f64) -> Result<Var> {
        let x = self.check(input)?;
        let out = self.nodes[x].value.map(|v| if v > 0.0 { v } else { slope * v });
        let rg = self.grad_flag(&[x]);
        Ok(self.push(out, Op::LeakyRelu { x, slope }, rg))
    }

    /// Log-sum-exp over the last axis; `[K]` gives a scalar, `[B, K]` gives `[B]`.
    pub fn logsumexp(&mut self, input: Var) -> Result<Var> {
        let x = self.check(input)?;
        let xt = &self.nodes[x].value;
        let k = *xt.shape().last().ok_or_else(|| Error::Dimension("logsumexp of a scalar".into()))?;
        let out: Vec<f64> = xt.data().chunks(k).map(logsumexp).collect();
        let shape = xt.shape()[..xt.ndim() - 1].to_vec();
        let rg = self.grad_flag(&[x]);
        Ok(self.push(Tensor::new(shape, out)?, Op::LogSumExp { x }, rg))
    }

    fn binary(&mut self, a: Var, b: Var, f: fn(f64, f64) -> f64) -> Result<(usize, usize, Tensor)> {
        let (a, b) = (self.check(a)?, self.check(b)?);
        let out = self.nodes[a].value.zip_map(&self.nodes[b].value, f)?;
        Ok((a, b, out))
    }

    pub fn add(&mut self, lhs: Var, rhs: Var) -> Result<Var> {
        let (a, b, out) = self.binary(lhs, rhs, |x, y| x + y)?;
        let rg = self.grad_flag(&[a, b]);
        Ok(self.push(out, Op::Add { a, b }, rg))
    }

    pub fn sub(&mut self, lhs: Var, rhs: Var) -> Result<Var> {
        let (a, b, out) = self.binary(lhs, rhs, |x, y| x - y)?;
        let rg = self.grad_flag(&[a, b]);
        Ok(self.push(out, Op::Sub { a, b }, rg))
    }

    pub fn mul(&mut self, lhs: Var, rhs: Var) -> Result<Var> {
        let (a, b, out) = self.binary(lhs, rhs, |x, y| x * y)?;
        let rg = self.grad_flag(&[a, b]);
        Ok(self.push(out, Op::Mul { a, b }, rg))
    }

    pub fn scale(&mut self, input: Var, c: f64) -> Result<Var> {
        let x = self.check(input)?;
        let out = self.nodes[x].value.map(|v| v * c);
        let rg = self.grad_flag(&[x]);
        Ok(self.push(out, Op::Scale { x, c }, rg))
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, input: Var) -> Result<Var> {
        let x = self.check(input)?;
        let s = self.nodes[x].value.sum();
        let rg = self.grad_flag(&[x]);
        Ok(self.push(Tensor::scalar(s), Op::Sum { x }, rg))
    }

    /// Mean of all entries, as a scalar.
    pub fn mean(&mut self, input: Var) -> Result<Var> {
        let x = self.check(input)?;
        let t = &self.nodes[x].value;
        let m = t.sum() / t.len() as f64;
        let rg = self.grad_flag(&[x]);
        Ok(self.push(Tensor::scalar(m), Op::Mean { x }, rg))
    }

    /// Collapse every axis after the leading (batch) axis.
    pub fn flatten(&mut self, input: Var) -> Result<Var> {
        let x = self.check(input)?;
        let t = &self.nodes[x].value;
        let shape = vec![t.rows(), t.row_len()];
        self.reshape_idx(x, &shape)
    }

    pub fn reshape(&mut self, input: Var, shape: &[usize]) -> Result<Var> {
        let x = self.check(input)?;
        self.reshape_idx(x, shape)
    }

    fn reshape_idx(&mut self, x: usize, shape: &[usize]) -> Result<Var> {
        let out = self.nodes[x].value.reshape(shape)?;
        let rg = self.grad_flag(&[x]);
        Ok(self.push(out, Op::Reshape { x }, rg))
    }

    /// Spatial mean: `[B, C, H, W]` to `[B, C]`, or `[C, H, W]` to `[C]`.
    pub fn mean_pool(&mut self, input: Var) -> Result<Var> {
        let x = self.check(input)?;
        let t = &self.nodes[x].value;
        let (shape, plane) = match t.shape() {
            [c, h, w] => (vec![*c], h * w),
            [b, c, h, w] => (vec![*b, *c], h * w),
            s => return Err(Error::Dimension(format!("mean_pool needs 3-D or 4-D input, got {s:?}"))),
        };
        let out: Vec<f64> = t.data().chunks(plane).map(|p| p.iter().sum::<f64>() / plane as f64).collect();
        let rg = self.grad_flag(&[x]);
        Ok(self.push(Tensor::new(shape, out)?, Op::MeanPool { x }, rg))
    }

    /// Reverse-mode gradients of the scalar `seed` with respect to every
    /// differentiable leaf. Leaves the seed does not depend on get zeros.
    pub fn backward(&self, seed: Var) -> Result<Gradients> {
        let s = self.check(seed)?;
        if self.nodes[s].value.len() != 1 {
            return Err(Error::Usage(format!(
                "backward seed must be scalar, got shape {:?}",
                self.nodes[s].value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[s] = Some(vec![1.0]);

        for idx in (0..=s).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(gy) = grads[idx].take() else { continue };
            if matches!(node.op, Op::Leaf) {
                grads[idx] = Some(gy);
                continue;
            }
            self.propagate(node, &gy, &mut grads);
        }

        let tensors = self
            .nodes
            .iter()
            .zip(grads)
            .map(|(node, g)| match (&node.op, node.requires_grad) {
                (Op::Leaf, true) => Some(match g {
                    Some(d) => Tensor::new(node.value.shape().to_vec(), d).expect("gradient shape"),
                    None => Tensor::zeros(node.value.shape()),
                }),
                _ => None,
            })
            .collect();
        Ok(Gradients { tape: self.id, grads: tensors })
    }

    fn wants(&self, i: usize) -> bool {
        self.nodes[i].requires_grad
    }

    fn propagate(&self, node: &Node, gy: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match node.op {
            Op::Leaf => {}
            Op::Affine { w, b, x } => {
                let (wt, xt) = (&self.nodes[w].value, &self.nodes[x].value);
                let (k, n) = (wt.shape()[0], wt.shape()[1]);
                let batch = xt.len() / n;
                let (wd, xd) = (wt.data(), xt.data());
                if self.wants(w) {
                    let mut gw = vec![0.0; k * n];
                    for r in 0..batch {
                        let xr = &xd[r * n..(r + 1) * n];
                        for o in 0..k {
                            let g = gy[r * k + o];
                            if g != 0.0 {
                                for (gwv, xv) in gw[o * n..(o + 1) * n].iter_mut().zip(xr) {
                                    *gwv += g * xv;
                                }
                            }
                        }
                    }
                    accumulate(grads, w, gw);
                }
                if self.wants(b) {
                    let mut gb = vec![0.0; k];
                    for r in 0..batch {
                        for (o, gbv) in gb.iter_mut().enumerate() {
                            *gbv += gy[r * k + o];
                        }
                    }
                    accumulate(grads, b, gb);
                }
                if self.wants(x) {
                    let mut gx = vec![0.0; batch * n];
                    for r in 0..batch {
                        let gxr = &mut gx[r * n..(r + 1) * n];
                        for o in 0..k {
                            let g = gy[r * k + o];
                            if g != 0.0 {
                                for (gxv, wv) in gxr.iter_mut().zip(&wd[o * n..(o + 1) * n]) {
                                    *gxv += g * wv;
                                }
                            }
                        }
                    }
                    accumulate(grads, x, gx);
                }
            }
            Op::Conv2d { k, b, x, stride, padding } => {
                let (g, _) = self.conv_geom(k, x, stride, padding).expect("validated in forward");
                let kd = self.nodes[k].value.data();
                let xd = self.nodes[x].value.data();
                let want_k = self.wants(k);
                let want_x = self.wants(x);
                let mut gk = if want_k { vec![0.0; kd.len()] } else { Vec::new() };
                let mut gx = if want_x { vec![0.0; xd.len()] } else { Vec::new() };
                let (rlen, p, plane) = (g.patch_len(), g.positions(), g.c_in * g.h * g.w);
                let mut cols = vec![0.0; rlen * p];
                let mut gcols = vec![0.0; rlen * p];
                for bi in 0..g.batch {
                    let gsample = &gy[bi * g.c_out * p..][..g.c_out * p];
                    if want_k {
                        g.im2col(&xd[bi * plane..][..plane], &mut cols);
                        for co in 0..g.c_out {
                            let gplane = &gsample[co * p..][..p];
                            for (r, gkv) in gk[co * rlen..(co + 1) * rlen].iter_mut().enumerate() {
                                *gkv += gplane.iter().zip(&cols[r * p..(r + 1) * p]).map(|(a, b)| a * b).sum::<f64>();
                            }
                        }
                    }
                    if want_x {
                        gcols.fill(0.0);
                        for co in 0..g.c_out {
                            let gplane = &gsample[co * p..][..p];
                            for (r, &wv) in kd[co * rlen..(co + 1) * rlen].iter().enumerate() {
                                for (c, &gv) in gcols[r * p..(r + 1) * p].iter_mut().zip(gplane) {
                                    *c += wv * gv;
                                }
                            }
                        }
                        g.col2im(&gcols, &mut gx[bi * plane..][..plane]);
                    }
                }
                if want_k {
                    accumulate(grads, k, gk);
                }
                if want_x {
                    accumulate(grads, x, gx);
                }
                if let Some(b) = b.filter(|&b| self.wants(b)) {
                    let mut gb = vec![0.0; g.c_out];
                    for bi in 0..g.batch {
                        for (co, gbv) in gb.iter_mut().enumerate() {
                            *gbv += gy[(bi * g.c_out + co) * g.oh * g.ow..][..g.oh * g.ow].iter().sum::<f64>();
                        }
                    }
                    accumulate(grads, b, gb);
                }
            }
            Op::LeakyRelu { x, slope } => {
                if self.wants(x) {
                    let xd = self.nodes[x].value.data();
                    let gx = xd.iter().zip(gy).map(|(&v, &g)| if v > 0.0 { g } else { slope * g }).collect();
                    accumulate(grads, x, gx);
                }
            }
            Op::LogSumExp { x } => {
                if self.wants(x) {
                    let xt = &self.nodes[x].value;
                    let k = *xt.shape().last().expect("validated in forward");
                    let mut gx = Vec::with_capacity(xt.len());
                    for ((row, &lse), &g) in xt.data().chunks(k).zip(node.value.data()).zip(gy) {
                        gx.extend(row.iter().map(|&v| g * (v - lse).exp()));
                    }
                    accumulate(grads, x, gx);
                }
            }
            Op::Add { a, b } => {
                if self.wants(a) {
                    accumulate(grads, a, gy.to_vec());
                }
                if self.wants(b) {
                    accumulate(grads, b, gy.to_vec());
                }
            }
            Op::Sub { a, b } => {
                if self.wants(a) {
                    accumulate(grads, a, gy.to_vec());
                }
                if self.wants(b) {
                    accumulate(grads, b, gy.iter().map(|g| -g).collect());
                }
            }
            Op::Mul { a, b } => {
                let (ad, bd) = (self.nodes[a].value.data(), self.nodes[b].value.data());
                if self.wants(a) {
                    accumulate(grads, a, gy.iter().zip(bd).map(|(g, v)| g * v).collect());
                }
                if self.wants(b) {
                    accumulate(grads, b, gy.iter().zip(ad).map(|(g, v)| g * v).collect());
                }
            }
            Op::Scale { x, c } => {
                if self.wants(x) {
                    accumulate(grads, x, gy.iter().map(|g| g * c).collect());
                }
            }
            Op::Sum { x } => {
                if self.wants(x) {
                    accumulate(grads, x, vec![gy[0]; self.nodes[x].value.len()]);
                }
            }
            Op::Mean { x } => {
                if self.wants(x) {
                    let n = self.nodes[x].value.len();
                    accumulate(grads, x, vec![gy[0] / n as f64; n]);
                }
            }
            Op::Reshape { x } => {
                if self.wants(x) {
                    accumulate(grads, x, gy.to_vec());
                }
            }
            Op::MeanPool { x } => {
                if self.wants(x) {
                    let n = self.nodes[x].value.len();
                    let plane = n / gy.len();
                    let mut gx = Vec::with_capacity(n);
                    for &g in gy {
                        gx.extend(std::iter::repeat_n(g / plane as f64, plane));
                    }
                    accumulate(grads, x, gx);
                }
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], idx: usize, g: Vec<f64>) {
    match &mut grads[idx] {
        Some(existing) => existing.iter_mut().zip(g).for_each(|(e, v)| *e += v),
        slot @ None => *slot = Some(g),
    }
}

/// Gradients of one backward pass, indexed by leaf.
#[derive(Debug)]
pub struct Gradients {
    tape: u64,
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for a differentiable leaf; `None` for constants and
    /// intermediate values.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        if v.tape != self.tape {
            return None;
        }
        self.grads.get(v.idx).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        if v.tape != self.tape {
            return None;
        }
        self.grads.get_mut(v.idx).and_then(Option::take)
    }
}

/// Parameter gradients, plus an optional gradient with respect to the input.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub params: Vec<Tensor>,
    pub input: Option<Tensor>,
}

impl GradientSet {
    pub fn from_params(params: Vec<Tensor>) -> Self {
        Self { params, input: None }
    }

    /// Global Euclidean norm over all parameter gradients.
    pub fn norm(&self) -> f64 {
        self.params.iter().map(Tensor::sq_norm).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &GradientSet) -> f64 {
        self.params
            .iter()
            .zip(&other.params)
            .map(|(a, b)| a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum::<f64>())
            .sum()
    }

    /// Cosine similarity of the flattened parameter gradients; 0 if either is zero.
    pub fn cosine(&self, other: &GradientSet) -> f64 {
        let denom = self.norm() * other.norm();
        if denom == 0.0 {
            0.0
        } else {
            self.dot(other) / denom
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.params.iter().flat_map(|t| t.data().iter().copied()).collect()
    }
}

/// Numerically stable `log Σ exp(values)`.
pub fn logsumexp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if !m.is_finite() {
        return m;
    }
    m + values.iter().map(|&v| (v - m).exp()).sum::<f64>().ln()
}

/// Softmax of a logit vector.
pub fn softmax(values: &[f64]) -> Vec<f64> {
    let lse = logsumexp(values);
    values.iter().map(|&v| (v - lse).exp()).collect()
}
