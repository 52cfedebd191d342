use super::kernels::{self, ConvGeom, UpGeom};
use super::{Real, Tensor};
use crate::error::{shape_err, Error, Result};
use crate::losses::{dice, softargmax, smoothness, SmoothnessParams};

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// Recorded operation together with whatever forward context its backward
/// pass needs beyond the input and output values.
#[derive(Debug, Clone)]
pub enum Op {
    Leaf,
    Conv2d { x: Var, w: Var, b: Var, dilation: usize },
    UpConv { x: Var, w: Var, b: Var },
    MaxPool { x: Var, argmax: Vec<u32> },
    Relu { x: Var },
    Sigmoid { x: Var },
    Add { a: Var, b: Var },
    Scale { x: Var, s: f64 },
    Shift { x: Var, c: f64 },
    Concat { a: Var, b: Var },
    SliceChannels { x: Var, start: usize },
    Softmax { x: Var },
    Sum { x: Var },
    InnerProduct { x: Var, weights: Vec<f64> },
    Dice { probs: Var, target: Var, smooth: f64 },
    Softargmax { probs: Var, beta: f64 },
    Smoothness { v: Var, intensity: Var, labels: Vec<u8>, params: SmoothnessParams },
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Conv2d { .. } => "conv2d",
            Op::UpConv { .. } => "transposed_conv2d",
            Op::MaxPool { .. } => "maxpool2d",
            Op::Relu { .. } => "relu",
            Op::Sigmoid { .. } => "sigmoid",
            Op::Add { .. } => "add",
            Op::Scale { .. } => "scale",
            Op::Shift { .. } => "shift",
            Op::Concat { .. } => "concat_channels",
            Op::SliceChannels { .. } => "slice_channels",
            Op::Softmax { .. } => "softmax_channels",
            Op::Sum { .. } => "sum",
            Op::InnerProduct { .. } => "inner_product",
            Op::Dice { .. } => "dice_loss",
            Op::Softargmax { .. } => "softargmax",
            Op::Smoothness { .. } => "smoothness_loss",
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match *self {
            Op::Leaf => vec![],
            Op::Conv2d { x, w, b, .. } | Op::UpConv { x, w, b } => vec![x, w, b],
            Op::MaxPool { x, .. }
            | Op::Relu { x }
            | Op::Sigmoid { x }
            | Op::Scale { x, .. }
            | Op::Shift { x, .. }
            | Op::SliceChannels { x, .. }
            | Op::Softmax { x }
            | Op::Sum { x }
            | Op::InnerProduct { x, .. } => vec![x],
            Op::Add { a, b } | Op::Concat { a, b } => vec![a, b],
            Op::Dice { probs, target, .. } => vec![probs, target],
            Op::Softargmax { probs, .. } => vec![probs],
            Op::Smoothness { v, intensity, .. } => vec![v, intensity],
        }
    }
}

/// Reverse-mode tape. Every tensor lives in an arena indexed by [`Var`];
/// operations are appended in execution order, which is therefore a valid
/// topological order for the backward sweep.
#[derive(Debug, Default)]
pub struct Tape<T> {
    values: Vec<Tensor<T>>,
    ops: Vec<Op>,
    needs_grad: Vec<bool>,
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { values: Vec::new(), ops: Vec::new(), needs_grad: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Record a leaf; it receives a gradient iff `t.requires_grad()`.
    pub fn leaf(&mut self, t: Tensor<T>) -> Var {
        let rg = t.requires_grad();
        self.push(t, Op::Leaf, rg)
    }

    pub fn param(&mut self, t: Tensor<T>) -> Var {
        self.leaf(t.with_requires_grad(true))
    }

    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.leaf(t.with_requires_grad(false))
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.values[v.0]
    }

    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.values[v.0].grad()
    }

    pub fn op(&self, v: Var) -> &Op {
        &self.ops[v.0]
    }

    /// First recorded tensor holding a NaN or infinity, if any.
    pub fn first_non_finite(&self) -> Option<(usize, &'static str)> {
        self.values
            .iter()
            .position(|t| !t.all_finite())
            .map(|i| (i, self.ops[i].name()))
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.first_non_finite() {
            Some((node, op)) => Err(Error::NonFinite { node, op }),
            None => Ok(()),
        }
    }

    fn push(&mut self, t: Tensor<T>, op: Op, needs_grad: bool) -> Var {
        self.values.push(t);
        self.ops.push(op);
        self.needs_grad.push(needs_grad);
        Var(self.values.len() - 1)
    }

    fn record(&mut self, t: Tensor<T>, op: Op) -> Var {
        let ng = op.inputs().iter().any(|v| self.needs_grad[v.0]);
        self.push(t, op, ng)
    }

    // ── forward operations ──────────────────────────────────────────

    /// Stride-1 same-padded convolution with dilated taps.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, dilation: usize) -> Result<Var> {
        let geom = self.conv_geom(x, w, b, dilation)?;
        let mut out = vec![T::zero(); geom.output_len()];
        kernels::conv2d_forward(
            &geom,
            self.value(x).data(),
            self.value(w).data(),
            self.value(b).data(),
            &mut out,
        );
        let t = Tensor::new(&[geom.batch, geom.out_ch, geom.height, geom.width], out)?;
        Ok(self.record(t, Op::Conv2d { x, w, b, dilation }))
    }

    fn conv_geom(&self, x: Var, w: Var, b: Var, dilation: usize) -> Result<ConvGeom> {
        let (n, ci, h, wd) = self.value(x).dims4("conv2d")?;
        let (co, wci, kh, kw) = self.value(w).dims4("conv2d")?;
        if wci != ci {
            return Err(shape_err(
                "conv2d",
                format!("input has {ci} channels but kernel {:?} expects {wci}", self.value(w).shape()),
            ));
        }
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(shape_err("conv2d", format!("kernel {kh}x{kw} must have odd extents")));
        }
        if dilation == 0 {
            return Err(shape_err("conv2d", "dilation must be positive"));
        }
        if self.value(b).shape() != [co] {
            return Err(shape_err(
                "conv2d",
                format!("bias shape {:?} does not match {co} output channels", self.value(b).shape()),
            ));
        }
        Ok(ConvGeom { batch: n, in_ch: ci, out_ch: co, height: h, width: wd, kh, kw, dilation })
    }

    fn up_geom(&self, x: Var, w: Var, b: Var) -> Result<UpGeom> {
        let (n, ci, h, wd) = self.value(x).dims4("transposed_conv2d")?;
        let (wci, co, kh, kw) = self.value(w).dims4("transposed_conv2d")?;
        if (kh, kw) != (2, 2) {
            return Err(shape_err("transposed_conv2d", format!("kernel must be 2x2, got {kh}x{kw}")));
        }
        if wci != ci {
            return Err(shape_err(
                "transposed_conv2d",
                format!("input has {ci} channels but kernel expects {wci}"),
            ));
        }
        if self.value(b).shape() != [co] {
            return Err(shape_err("transposed_conv2d", format!("bias must have shape [{co}]")));
        }
        Ok(UpGeom { batch: n, in_ch: ci, out_ch: co, height: h, width: wd })
    }

    /// Learned 2x upsampling: 2x2 kernel, stride 2, `w` shaped `[Ci, Co, 2, 2]`.
    pub fn transposed_conv2d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let g = self.up_geom(x, w, b)?;
        let mut out = vec![T::zero(); g.batch * g.out_ch * 4 * g.height * g.width];
        kernels::upconv_forward(&g, self.value(x).data(), self.value(w).data(), self.value(b).data(), &mut out);
        let t = Tensor::new(&[g.batch, g.out_ch, 2 * g.height, 2 * g.width], out)?;
        Ok(self.record(t, Op::UpConv { x, w, b }))
    }

    pub fn maxpool2d(&mut self, x: Var) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4("maxpool2d")?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(shape_err("maxpool2d", format!("spatial extents {h}x{w} must be even")));
        }
        let len = n * c * (h / 2) * (w / 2);
        let mut out = vec![T::zero(); len];
        let mut argmax = vec![0u32; len];
        kernels::maxpool_forward(n * c, h, w, self.value(x).data(), &mut out, &mut argmax);
        let t = Tensor::new(&[n, c, h / 2, w / 2], out)?;
        Ok(self.record(t, Op::MaxPool { x, argmax }))
    }

    fn map(&mut self, x: Var, f: impl Fn(T) -> T, op: Op) -> Var {
        let src = self.value(x);
        let t = Tensor::new(src.shape(), src.data().iter().map(|&v| f(v)).collect())
            .expect("shape preserved");
        self.record(t, op)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.map(x, |v| if v > T::zero() { v } else { T::zero() }, Op::Relu { x })
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map(x, |v| T::one() / (T::one() + (-v).exp()), Op::Sigmoid { x })
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let sv = T::from_f64(s);
        self.map(x, |v| v * sv, Op::Scale { x, s })
    }

    /// Adds the constant `c` to every element.
    pub fn shift(&mut self, x: Var, c: f64) -> Var {
        let cv = T::from_f64(c);
        self.map(x, |v| v + cv, Op::Shift { x, c })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err("add", format!("{:?} vs {:?}", ta.shape(), tb.shape())));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&p, &q)| p + q).collect();
        let t = Tensor::new(ta.shape(), data)?;
        Ok(self.record(t, Op::Add { a, b }))
    }

    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, ca, h, w) = self.value(a).dims4("concat_channels")?;
        let (nb, cb, hb, wb) = self.value(b).dims4("concat_channels")?;
        if (n, h, w) != (nb, hb, wb) {
            return Err(shape_err(
                "concat_channels",
                format!("{:?} vs {:?}", self.value(a).shape(), self.value(b).shape()),
            ));
        }
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let plane = h * w;
        let mut data = Vec::with_capacity(n * (ca + cb) * plane);
        for i in 0..n {
            data.extend_from_slice(&da[i * ca * plane..(i + 1) * ca * plane]);
            data.extend_from_slice(&db[i * cb * plane..(i + 1) * cb * plane]);
        }
        let t = Tensor::new(&[n, ca + cb, h, w], data)?;
        Ok(self.record(t, Op::Concat { a, b }))
    }

    /// Concatenate several tensors along the channel axis, left to right.
    pub fn concat_all(&mut self, parts: &[Var]) -> Result<Var> {
        let (&first, rest) = parts
            .split_first()
            .ok_or_else(|| shape_err("concat_channels", "nothing to concatenate"))?;
        rest.iter().try_fold(first, |acc, &p| self.concat_channels(acc, p))
    }

    pub fn slice_channels(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(x).slice_channels(start, len)?;
        Ok(self.record(t, Op::SliceChannels { x, start }))
    }

    /// Per-pixel softmax over the channel axis.
    pub fn softmax_channels(&mut self, x: Var) -> Result<Var> {
        let (n, k, h, w) = self.value(x).dims4("softmax_channels")?;
        if k < 2 {
            return Err(shape_err("softmax_channels", format!("need at least 2 channels, got {k}")));
        }
        let plane = h * w;
        let src = self.value(x).data();
        let mut out = vec![T::zero(); src.len()];
        for b in 0..n {
            let base = b * k * plane;
            for p in 0..plane {
                let mut m = T::neg_infinity();
                for c in 0..k {
                    m = m.max(src[base + c * plane + p]);
                }
                let mut s = T::zero();
                for c in 0..k {
                    let e = (src[base + c * plane + p] - m).exp();
                    out[base + c * plane + p] = e;
                    s = s + e;
                }
                for c in 0..k {
                    out[base + c * plane + p] = out[base + c * plane + p] / s;
                }
            }
        }
        let t = Tensor::new(&[n, k, h, w], out)?;
        Ok(self.record(t, Op::Softmax { x }))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().copied().sum::<T>();
        self.record(Tensor::scalar(s), Op::Sum { x })
    }

    /// `sum(x * weights)` for a constant weight array of the same size.
    pub fn inner_product(&mut self, x: Var, weights: &[T]) -> Result<Var> {
        let xv = self.value(x);
        if xv.numel() != weights.len() {
            return Err(shape_err(
                "inner_product",
                format!("{} weights for tensor of shape {:?}", weights.len(), xv.shape()),
            ));
        }
        let s = xv.data().iter().zip(weights).map(|(&a, &b)| a * b).sum::<T>();
        let weights = weights.iter().map(|w| w.as_f64()).collect();
        Ok(self.record(Tensor::scalar(s), Op::InnerProduct { x, weights }))
    }

    /// Soft Dice loss `1 - mean_{n,k} (2 sum(p g) + s) / (sum p + sum g + s)`.
    pub fn dice_loss(&mut self, probs: Var, target: Var, smooth: f64) -> Result<Var> {
        let (n, k, h, w) = self.value(probs).dims4("dice_loss")?;
        if self.value(target).shape() != self.value(probs).shape() {
            return Err(shape_err(
                "dice_loss",
                format!("target {:?} vs probs {:?}", self.value(target).shape(), self.value(probs).shape()),
            ));
        }
        dice::check_one_hot(n, k, h * w, self.value(target).data())?;
        let l = dice::forward(n, k, h * w, self.value(probs).data(), self.value(target).data(), smooth);
        Ok(self.record(Tensor::scalar(l), Op::Dice { probs, target, smooth }))
    }

    /// Expected class index under `softmax(beta * p)` per pixel.
    pub fn softargmax(&mut self, probs: Var, beta: f64) -> Result<Var> {
        let (n, k, h, w) = self.value(probs).dims4("softargmax")?;
        if beta.is_nan() || beta <= 0.0 {
            return Err(Error::InvalidArgument(format!("softargmax beta must be positive, got {beta}")));
        }
        let v = softargmax::forward(n, k, h * w, self.value(probs).data(), beta);
        let t = Tensor::new(&[n, 1, h, w], v)?;
        Ok(self.record(t, Op::Softargmax { probs, beta }))
    }

    /// Anatomy-aware smoothness loss over 8-neighbourhoods. `labels` are the
    /// hard per-pixel labels gating each pair; they and `intensity` are
    /// treated as constants.
    pub fn smoothness_loss(
        &mut self,
        v: Var,
        labels: &[u8],
        intensity: Var,
        params: SmoothnessParams,
    ) -> Result<Var> {
        let (n, c, h, w) = self.value(v).dims4("smoothness_loss")?;
        if c != 1 || self.value(intensity).shape() != self.value(v).shape() {
            return Err(shape_err(
                "smoothness_loss",
                format!(
                    "V {:?} and image {:?} must both be [N,1,H,W]",
                    self.value(v).shape(),
                    self.value(intensity).shape()
                ),
            ));
        }
        if labels.len() != n * h * w {
            return Err(shape_err(
                "smoothness_loss",
                format!("{} labels for {} pixels", labels.len(), n * h * w),
            ));
        }
        let l = smoothness::forward(n, h, w, self.value(v).data(), labels, self.value(intensity).data(), &params);
        Ok(self.record(
            Tensor::scalar(l),
            Op::Smoothness { v, intensity, labels: labels.to_vec(), params },
        ))
    }

    // ── backward ────────────────────────────────────────────────────

    /// Accumulate `d loss / d t` into the gradient slot of every tensor that
    /// requires a gradient and is reachable from `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(shape_err(
                "backward",
                format!("loss must be scalar, got shape {:?}", self.value(loss).shape()),
            ));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.values.len()];
        grads[loss.0] = Some(vec![T::one()]);
        for idx in (0..=loss.0).rev() {
            if matches!(self.ops[idx], Op::Leaf) || !self.needs_grad[idx] {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            for (input, contrib) in self.vjp(idx, &g) {
                accumulate(&mut grads[input.0], contrib);
            }
            grads[idx] = Some(g);
        }
        for (i, g) in grads.into_iter().enumerate() {
            if let Some(g) = g {
                if self.needs_grad[i] {
                    match self.values[i].grad.as_mut() {
                        Some(existing) => existing.iter_mut().zip(&g).for_each(|(e, v)| *e = *e + *v),
                        None => self.values[i].set_grad(g),
                    }
                }
            }
        }
        Ok(())
    }

    /// Vector-Jacobian products of node `idx` for every input needing a gradient.
    fn vjp(&self, idx: usize, g: &[T]) -> Vec<(Var, Vec<T>)> {
        let wants = |v: Var| self.needs_grad[v.0];
        let mut out = Vec::new();
        match &self.ops[idx] {
            Op::Leaf => {}
            &Op::Conv2d { x, w, b, dilation } => {
                let geom = self.conv_geom(x, w, b, dilation).expect("validated in forward");
                if wants(x) {
                    let mut dx = vec![T::zero(); geom.input_len()];
                    kernels::conv2d_backward_input(&geom, g, self.value(w).data(), &mut dx);
                    out.push((x, dx));
                }
                if wants(w) || wants(b) {
                    let mut dw = vec![T::zero(); geom.weight_len()];
                    let mut db = vec![T::zero(); geom.out_ch];
                    kernels::conv2d_backward_params(&geom, self.value(x).data(), g, &mut dw, &mut db);
                    if wants(w) {
                        out.push((w, dw));
                    }
                    if wants(b) {
                        out.push((b, db));
                    }
                }
            }
            &Op::UpConv { x, w, b } => {
                let geom = self.up_geom(x, w, b).expect("validated in forward");
                if wants(x) {
                    let mut dx = vec![T::zero(); self.value(x).numel()];
                    kernels::upconv_backward_input(&geom, g, self.value(w).data(), &mut dx);
                    out.push((x, dx));
                }
                if wants(w) || wants(b) {
                    let mut dw = vec![T::zero(); self.value(w).numel()];
                    let mut db = vec![T::zero(); geom.out_ch];
                    kernels::upconv_backward_params(&geom, self.value(x).data(), g, &mut dw, &mut db);
                    if wants(w) {
                        out.push((w, dw));
                    }
                    if wants(b) {
                        out.push((b, db));
                    }
                }
            }
            Op::MaxPool { x, argmax } => {
                let (n, c, h, w) = self.value(*x).dims4("maxpool2d").expect("rank 4");
                let (ip, op) = (h * w, (h / 2) * (w / 2));
                let mut dx = vec![T::zero(); n * c * ip];
                for (o, (&gv, &am)) in g.iter().zip(argmax).enumerate() {
                    let i = (o / op) * ip + am as usize;
                    dx[i] = dx[i] + gv;
                }
                out.push((*x, dx));
            }
            &Op::Relu { x } => {
                let xv = self.value(x).data();
                out.push((x, g.iter().zip(xv).map(|(&gv, &v)| if v > T::zero() { gv } else { T::zero() }).collect()));
            }
            &Op::Sigmoid { x } => {
                let y = self.values[idx].data();
                out.push((x, g.iter().zip(y).map(|(&gv, &s)| gv * s * (T::one() - s)).collect()));
            }
            &Op::Add { a, b } => {
                if wants(a) {
                    out.push((a, g.to_vec()));
                }
                if wants(b) {
                    out.push((b, g.to_vec()));
                }
            }
            &Op::Scale { x, s } => {
                let sv = T::from_f64(s);
                out.push((x, g.iter().map(|&v| v * sv).collect()));
            }
            &Op::Shift { x, .. } => out.push((x, g.to_vec())),
            &Op::Concat { a, b } => {
                let (n, ca, h, w) = self.value(a).dims4("concat_channels").expect("rank 4");
                let cb = self.value(b).shape()[1];
                let plane = h * w;
                let (mut ga, mut gb) = (Vec::with_capacity(n * ca * plane), Vec::with_capacity(n * cb * plane));
                for i in 0..n {
                    let base = i * (ca + cb) * plane;
                    ga.extend_from_slice(&g[base..base + ca * plane]);
                    gb.extend_from_slice(&g[base + ca * plane..base + (ca + cb) * plane]);
                }
                if wants(a) {
                    out.push((a, ga));
                }
                if wants(b) {
                    out.push((b, gb));
                }
            }
            &Op::SliceChannels { x, start } => {
                let (n, c, h, w) = self.value(x).dims4("slice_channels").expect("rank 4");
                let len = self.values[idx].shape()[1];
                let plane = h * w;
                let mut dx = vec![T::zero(); n * c * plane];
                for i in 0..n {
                    let dst = (i * c + start) * plane;
                    dx[dst..dst + len * plane].copy_from_slice(&g[i * len * plane..(i + 1) * len * plane]);
                }
                out.push((x, dx));
            }
            &Op::Softmax { x } => {
                let (n, k, h, w) = self.value(x).dims4("softmax_channels").expect("rank 4");
                let plane = h * w;
                let y = self.values[idx].data();
                let mut dx = vec![T::zero(); y.len()];
                for b in 0..n {
                    let base = b * k * plane;
                    for p in 0..plane {
                        let mut dotv = T::zero();
                        for c in 0..k {
                            let i = base + c * plane + p;
                            dotv = dotv + y[i] * g[i];
                        }
                        for c in 0..k {
                            let i = base + c * plane + p;
                            dx[i] = y[i] * (g[i] - dotv);
                        }
                    }
                }
                out.push((x, dx));
            }
            &Op::Sum { x } => out.push((x, vec![g[0]; self.value(x).numel()])),
            Op::InnerProduct { x, weights } => {
                out.push((*x, weights.iter().map(|&w| g[0] * T::from_f64(w)).collect()));
            }
            &Op::Dice { probs, target, smooth } => {
                let (n, k, h, w) = self.value(probs).dims4("dice_loss").expect("rank 4");
                let dp = dice::backward(n, k, h * w, self.value(probs).data(), self.value(target).data(), smooth, g[0]);
                out.push((probs, dp));
            }
            &Op::Softargmax { probs, beta } => {
                let (n, k, h, w) = self.value(probs).dims4("softargmax").expect("rank 4");
                let dp = softargmax::backward(n, k, h * w, self.value(probs).data(), self.values[idx].data(), beta, g);
                out.push((probs, dp));
            }
            Op::Smoothness { v, intensity, labels, params } => {
                let (n, _, h, w) = self.value(*v).dims4("smoothness_loss").expect("rank 4");
                let dv = smoothness::backward(
                    n,
                    h,
                    w,
                    self.value(*v).data(),
                    labels,
                    self.value(*intensity).data(),
                    params,
                    g[0],
                );
                out.push((*v, dv));
            }
        }
        out.retain(|(v, _)| wants(*v));
        out
    }
}

fn accumulate<T: Real>(slot: &mut Option<Vec<T>>, contrib: Vec<T>) {
    match slot {
        Some(acc) => acc.iter_mut().zip(&contrib).for_each(|(a, c)| *a = *a + *c),
        None => *slot = Some(contrib),
    }
}
