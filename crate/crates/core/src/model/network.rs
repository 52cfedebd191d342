//! The forward graph: five encoder stages, four DME skip transformers, four
//! up blocks and a 1x1 head.

use std::collections::HashMap;

use super::config::ArchConfig;
use super::params::ParamStore;
use super::Head;
use crate::error::{shape_err, Error, Result};
use crate::tensor::{Real, Tape, Tensor, Var};

/// Tape handles of a parameter store's tensors.
#[derive(Debug, Clone, Default)]
pub struct ParamVars {
    vars: HashMap<String, Var>,
    order: Vec<(String, Var)>,
}

impl ParamVars {
    /// Record every tensor of `store` as a leaf, trainable or constant.
    pub fn register<T: Real>(tape: &mut Tape<T>, store: &ParamStore<T>, trainable: bool) -> Self {
        let mut out = ParamVars::default();
        for (name, t) in store.iter() {
            let v = tape.leaf(t.clone().with_requires_grad(trainable));
            out.vars.insert(name.to_string(), v);
            out.order.push((name.to_string(), v));
        }
        out
    }

    /// Wrap existing tape handles, e.g. leaves created by a gradient checker.
    pub fn from_vars(pairs: impl IntoIterator<Item = (String, Var)>) -> Self {
        let mut out = ParamVars::default();
        for (name, v) in pairs {
            out.vars.insert(name.clone(), v);
            out.order.push((name, v));
        }
        out
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingParams(vec![name.to_string()]))
    }

    /// `(name, var)` in store order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.order.iter().map(|(n, v)| (n.as_str(), *v))
    }
}

/// Named activations captured during a forward pass.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    pub entries: Vec<(String, Var)>,
}

impl Trace {
    pub fn get(&self, name: &str) -> Option<Var> {
        self.entries.iter().find(|(n, _)| n == name).map(|&(_, v)| v)
    }
}

/// Output of one encoder stage.
#[derive(Debug, Clone, Copy)]
pub struct StageOutput {
    pub c1: Var,
    pub c2: Var,
    pub pooled: Option<Var>,
}

/// Graph builder bound to one tape and one set of parameters.
pub struct Network<'a, T: Real> {
    pub cfg: &'a ArchConfig,
    pub tape: &'a mut Tape<T>,
    pub params: &'a ParamVars,
    pub trace: Option<&'a mut Trace>,
}

impl<'a, T: Real> Network<'a, T> {
    fn note(&mut self, name: impl Into<String>, v: Var) -> Var {
        if let Some(t) = self.trace.as_deref_mut() {
            t.entries.push((name.into(), v));
        }
        v
    }

    fn conv(&mut self, layer: &str, x: Var, dilation: usize) -> Result<Var> {
        let w = self.params.get(&format!("{layer}.w"))?;
        let b = self.params.get(&format!("{layer}.b"))?;
        self.tape.conv2d(x, w, b, dilation)
    }

    fn conv_relu(&mut self, layer: &str, x: Var, dilation: usize) -> Result<Var> {
        let y = self.conv(layer, x, dilation)?;
        Ok(self.tape.relu(y))
    }

    /// Two 3x3 conv+relu layers, then 2x2 max pooling except at stage 5.
    /// `stage` is zero-based.
    pub fn basic_block(&mut self, x: Var, stage: usize) -> Result<StageOutput> {
        let p = format!("enc.b{}", stage + 1);
        let c1 = self.conv_relu(&format!("{p}.conv1"), x, 1)?;
        self.note(format!("{p}.c1"), c1);
        let c2 = self.conv_relu(&format!("{p}.conv2"), c1, 1)?;
        self.note(format!("{p}.c2"), c2);
        let pooled = if stage < 4 {
            let v = self.tape.maxpool2d(c2)?;
            Some(self.note(format!("{p}.pool"), v))
        } else {
            None
        };
        Ok(StageOutput { c1, c2, pooled })
    }

    /// Dilated multiscale block applied to a stage's pre-pooling feature:
    /// three parallel branches (two dilated 3x3, one large undilated) and the
    /// input itself are concatenated, projected back by a 1x1 convolution and
    /// passed through the skip convolution. `block` is zero-based.
    pub fn dme_block(&mut self, x: Var, block: usize) -> Result<Var> {
        let p = format!("dme.{}", block + 1);
        let b1 = self.conv_relu(&format!("{p}.branch1"), x, self.cfg.dilation_1)?;
        self.note(format!("{p}.branch1"), b1);
        let b2 = self.conv_relu(&format!("{p}.branch2"), x, self.cfg.dilation_2)?;
        self.note(format!("{p}.branch2"), b2);
        let b3 = self.conv_relu(&format!("{p}.branch3"), x, 1)?;
        self.note(format!("{p}.branch3"), b3);
        let cat = self.tape.concat_all(&[b1, b2, b3, x])?;
        self.note(format!("{p}.concat"), cat);
        let proj = self.conv_relu(&format!("{p}.proj"), cat, 1)?;
        self.note(format!("{p}.proj"), proj);
        let skip = self.conv_relu(&format!("{p}.a5"), proj, 1)?;
        Ok(self.note(format!("{p}.skip"), skip))
    }

    /// Upsample `d_in`, fuse with the stage's first conv output and DME skip,
    /// then with its second conv output. `block` is zero-based.
    pub fn up_block(&mut self, d_in: Var, skip: Var, c1: Var, c2: Var, block: usize) -> Result<Var> {
        let p = format!("dec.u{}", block + 1);
        let (dn, _, dh, _) = self.tape.value(d_in).dims4("up_block")?;
        let (sn, _, sh, _) = self.tape.value(c1).dims4("up_block")?;
        if dn != sn || 2 * dh != sh {
            return Err(shape_err(
                "up_block",
                format!(
                    "decoder input {:?} is not half the skip extent {:?}",
                    self.tape.value(d_in).shape(),
                    self.tape.value(c1).shape()
                ),
            ));
        }
        let w = self.params.get(&format!("{p}.up.w"))?;
        let b = self.params.get(&format!("{p}.up.b"))?;
        let psi = self.tape.transposed_conv2d(d_in, w, b)?;
        self.note(format!("{p}.psi"), psi);
        let cat1 = self.tape.concat_all(&[psi, c1, skip])?;
        self.note(format!("{p}.cat1"), cat1);
        let t1 = self.conv_relu(&format!("{p}.conv1"), cat1, 1)?;
        self.note(format!("{p}.t1"), t1);
        let t2 = self.conv_relu(&format!("{p}.conv2"), t1, 1)?;
        self.note(format!("{p}.t2"), t2);
        let cat2 = self.tape.concat_channels(t2, c2)?;
        self.note(format!("{p}.cat2"), cat2);
        let t3 = self.conv_relu(&format!("{p}.conv3"), cat2, 1)?;
        Ok(self.note(format!("{p}.t3"), t3))
    }

    /// Full network on `[N, 1, S, S]` images. Returns per-pixel class
    /// probabilities (semantic head) or foreground probability (binary head).
    pub fn forward(&mut self, images: Var, head: Head) -> Result<Var> {
        let s = self.cfg.image_size;
        let shape = self.tape.value(images).shape().to_vec();
        if shape.len() != 4 || shape[1] != 1 || shape[2] != s || shape[3] != s {
            return Err(shape_err("forward", format!("expected [N, 1, {s}, {s}] images, got {shape:?}")));
        }
        let mut stages = Vec::with_capacity(5);
        let mut x = images;
        for stage in 0..5 {
            let out = self.basic_block(x, stage)?;
            if let Some(p) = out.pooled {
                x = p;
            }
            stages.push(out);
        }
        let mut skips = Vec::with_capacity(4);
        for (k, st) in stages.iter().take(4).enumerate() {
            skips.push(self.dme_block(st.c2, k)?);
        }
        let mut d = stages[4].c2;
        for j in 0..4 {
            let k = 3 - j;
            d = self.up_block(d, skips[k], stages[k].c1, stages[k].c2, j)?;
        }
        let logits = self.conv("head", d, 1)?;
        self.note("head.logits", logits);
        let out = match head {
            Head::Semantic => self.tape.softmax_channels(logits)?,
            Head::Binary => self.tape.sigmoid(logits),
        };
        Ok(self.note("head.out", out))
    }
}

/// Build the graph on a fresh tape with constant parameters and return the
/// output tensor.
pub fn predict<T: Real>(
    cfg: &ArchConfig,
    store: &ParamStore<T>,
    head: Head,
    images: &Tensor<T>,
) -> Result<Tensor<T>> {
    let mut tape = Tape::new();
    let params = ParamVars::register(&mut tape, store, false);
    let x = tape.constant(images.clone());
    let out = Network { cfg, tape: &mut tape, params: &params, trace: None }.forward(x, head)?;
    Ok(tape.value(out).clone())
}

/// Semantic forward pass: `[N, 1, S, S]` images to `[N, K, S, S]` probabilities.
pub fn forward<T: Real>(cfg: &ArchConfig, store: &ParamStore<T>, images: &Tensor<T>) -> Result<Tensor<T>> {
    predict(cfg, store, Head::Semantic, images)
}

/// Binary-head forward pass: `[N, 1, S, S]` images to `[N, 1, S, S]`
/// foreground probabilities.
pub fn binary_head<T: Real>(cfg: &ArchConfig, store: &ParamStore<T>, images: &Tensor<T>) -> Result<Tensor<T>> {
    predict(cfg, store, Head::Binary, images)
}

/// Forward pass recording every named activation; returns the tape so the
/// activations can be inspected.
pub fn forward_traced<T: Real>(
    cfg: &ArchConfig,
    store: &ParamStore<T>,
    head: Head,
    images: &Tensor<T>,
) -> Result<(Tape<T>, Trace, Var)> {
    let mut tape = Tape::new();
    let params = ParamVars::register(&mut tape, store, false);
    let x = tape.constant(images.clone());
    let mut trace = Trace::default();
    let out = Network { cfg, tape: &mut tape, params: &params, trace: Some(&mut trace) }.forward(x, head)?;
    Ok((tape, trace, out))
}
