//! Self-checks shipped with the library: central-difference gradient checks
//! for every differentiable operation and comparisons of the fast loss,
//! convolution and metric code against brute-force references.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::losses::oracle::smoothness_oracle;
use crate::losses::{hard_labels, total_loss, LossConfig, SmoothnessParams};
use crate::metrics::oracle::{aad_oracle, boundary_oracle, hausdorff_oracle, iou_oracle};
use crate::metrics::{aad, boundary_pixels, hausdorff, iou, LabelMap};
use crate::model::{build, ArchConfig, Head, Network, ParamVars};
use crate::tensor::{grad_check, GradCheck, Tape, Tensor, Var};

/// Result of one named check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    /// Observed error (or mismatch count).
    pub value: f64,
    /// Largest acceptable value.
    pub threshold: f64,
    pub passed: bool,
}

impl CheckOutcome {
    fn new(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        CheckOutcome { name: name.into(), value, threshold, passed: value <= threshold }
    }

    fn strict(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        CheckOutcome { name: name.into(), value, threshold, passed: value < threshold }
    }
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<40} {:.3e} (limit {:.0e})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.threshold
        )
    }
}

pub const OP_TOLERANCE: f64 = 1e-6;
pub const NETWORK_TOLERANCE: f64 = 1e-5;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
}

fn probe(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn one_hot(rng: &mut ChaCha8Rng, n: usize, k: usize, h: usize, w: usize) -> Tensor<f64> {
    let plane = h * w;
    let mut t = Tensor::zeros(&[n, k, h, w]);
    for b in 0..n {
        for p in 0..plane {
            let c = rng.random_range(0..k);
            t.data_mut()[(b * k + c) * plane + p] = 1.0;
        }
    }
    t
}

type Program = Box<dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var>>;

/// Output tensor `y` reduced to a scalar by a fixed random projection.
fn projected(weights: Vec<f64>, op: impl Fn(&mut Tape<f64>, &[Var]) -> Result<Var> + 'static) -> Program {
    Box::new(move |t, v| {
        let y = op(t, v)?;
        t.inner_product(y, &weights)
    })
}

fn check(name: &str, inputs: Vec<Tensor<f64>>, cfg: &GradCheck, f: Program, tol: f64) -> Result<CheckOutcome> {
    let r = grad_check(&inputs, cfg, f)?;
    Ok(CheckOutcome::strict(name, r.max_rel_error, tol))
}

/// Every differentiable operation and the composed objective, in double
/// precision.
pub fn gradient_suite(seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plain = GradCheck { seed, ..GradCheck::default() };
    let jittered = GradCheck { jitter: Some(1e-3), ..plain.clone() };
    let g = |t: Tensor<f64>| t.with_requires_grad(true);
    let mut out = Vec::new();

    for d in [1usize, 2, 3] {
        let x = g(rand_tensor(&mut rng, &[2, 3, 7, 6], -1.0, 1.0));
        let w = g(rand_tensor(&mut rng, &[4, 3, 3, 3], -0.5, 0.5));
        let b = g(rand_tensor(&mut rng, &[4], -0.5, 0.5));
        let p = probe(&mut rng, 2 * 4 * 42);
        let f = projected(p, move |t, v| t.conv2d(v[0], v[1], v[2], d));
        out.push(check(&format!("conv2d dilation {d}"), vec![x, w, b], &plain, f, OP_TOLERANCE)?);
    }
    {
        let x = g(rand_tensor(&mut rng, &[2, 3, 4, 5], -1.0, 1.0));
        let w = g(rand_tensor(&mut rng, &[3, 2, 2, 2], -0.5, 0.5));
        let b = g(rand_tensor(&mut rng, &[2], -0.5, 0.5));
        let f = projected(probe(&mut rng, 2 * 2 * 8 * 10), |t, v| t.transposed_conv2d(v[0], v[1], v[2]));
        out.push(check("transposed_conv2d", vec![x, w, b], &plain, f, OP_TOLERANCE)?);
    }
    {
        let x = g(rand_tensor(&mut rng, &[2, 2, 6, 4], -1.0, 1.0));
        let f = projected(probe(&mut rng, 2 * 2 * 3 * 2), |t, v| t.maxpool2d(v[0]));
        out.push(check("maxpool2d", vec![x], &jittered, f, OP_TOLERANCE)?);
    }
    let shape = [2, 3, 4, 4];
    let n = 96;
    {
        let x = g(rand_tensor(&mut rng, &shape, -1.0, 1.0));
        let f = projected(probe(&mut rng, n), |t, v| Ok(t.relu(v[0])));
        out.push(check("relu", vec![x], &jittered, f, OP_TOLERANCE)?);
    }
    {
        let x = g(rand_tensor(&mut rng, &shape, -3.0, 3.0));
        let f = projected(probe(&mut rng, n), |t, v| Ok(t.sigmoid(v[0])));
        out.push(check("sigmoid", vec![x], &plain, f, OP_TOLERANCE)?);
    }
    {
        let x = g(rand_tensor(&mut rng, &shape, -1.0, 1.0));
        let f = projected(probe(&mut rng, n), |t, v| {
            let s = t.scale(v[0], -1.7);
            Ok(t.shift(s, 0.4))
        });
        out.push(check("scale and shift", vec![x], &plain, f, OP_TOLERANCE)?);
    }
    {
        let a = g(rand_tensor(&mut rng, &shape, -1.0, 1.0));
        let b = g(rand_tensor(&mut rng, &shape, -1.0, 1.0));
        let f = projected(probe(&mut rng, n), |t, v| t.add(v[0], v[1]));
        out.push(check("add", vec![a, b], &plain, f, OP_TOLERANCE)?);
    }
    {
        let a = g(rand_tensor(&mut rng, &[2, 2, 3, 3], -1.0, 1.0));
        let b = g(rand_tensor(&mut rng, &[2, 3, 3, 3], -1.0, 1.0));
        let f = projected(probe(&mut rng, 2 * 5 * 9), |t, v| t.concat_channels(v[0], v[1]));
        out.push(check("concat_channels", vec![a, b], &plain, f, OP_TOLERANCE)?);
    }
    {
        let x = g(rand_tensor(&mut rng, &[2, 5, 3, 3], -1.0, 1.0));
        let f = projected(probe(&mut rng, 2 * 2 * 9), |t, v| t.slice_channels(v[0], 1, 2));
        out.push(check("slice_channels", vec![x], &plain, f, OP_TOLERANCE)?);
    }
    {
        let x = g(rand_tensor(&mut rng, &[2, 5, 3, 3], -2.0, 2.0));
        let f = projected(probe(&mut rng, 2 * 5 * 9), |t, v| t.softmax_channels(v[0]));
        out.push(check("softmax_channels", vec![x], &plain, f, OP_TOLERANCE)?);
    }
    {
        let x = g(rand_tensor(&mut rng, &shape, -1.0, 1.0));
        let f: Program = Box::new(|t, v| Ok(t.sum(v[0])));
        out.push(check("sum", vec![x], &plain, f, OP_TOLERANCE)?);
    }
    {
        let logits = rand_tensor(&mut rng, &[2, 5, 4, 4], -2.0, 2.0);
        let probs = softmax_values(&logits)?.with_requires_grad(true);
        let target = one_hot(&mut rng, 2, 5, 4, 4);
        let f: Program = Box::new(move |t, v| {
            let g = t.constant(target.clone());
            t.dice_loss(v[0], g, 1.0)
        });
        out.push(check("dice_loss", vec![probs], &plain, f, OP_TOLERANCE)?);
    }
    for beta in [1.0, 10.0, 50.0] {
        let logits = rand_tensor(&mut rng, &[1, 5, 4, 4], -2.0, 2.0);
        let probs = softmax_values(&logits)?.with_requires_grad(true);
        let f = projected(probe(&mut rng, 16), move |t, v| t.softargmax(v[0], beta));
        out.push(check(&format!("softargmax beta {beta}"), vec![probs], &plain, f, OP_TOLERANCE)?);
    }
    {
        let v = g(rand_tensor(&mut rng, &[2, 1, 5, 6], 0.0, 4.0));
        let labels: Vec<u8> = (0..60).map(|_| rng.random_range(0..5)).collect();
        let image = rand_tensor(&mut rng, &[2, 1, 5, 6], 0.0, 1.0);
        let f: Program = Box::new(move |t, vs| {
            let i = t.constant(image.clone());
            t.smoothness_loss(vs[0], &labels, i, SmoothnessParams::default())
        });
        out.push(check("smoothness_loss", vec![v], &plain, f, OP_TOLERANCE)?);
    }
    {
        let logits = g(rand_tensor(&mut rng, &[2, 5, 5, 5], -2.0, 2.0));
        let target = one_hot(&mut rng, 2, 5, 5, 5);
        let image = rand_tensor(&mut rng, &[2, 1, 5, 5], 0.0, 1.0);
        let cfg = LossConfig { beta_softargmax: 10.0, lambda: 0.5, ..LossConfig::default() };
        let f: Program = Box::new(move |t, v| {
            let p = t.softmax_channels(v[0])?;
            let (g, i) = (t.constant(target.clone()), t.constant(image.clone()));
            Ok(total_loss(t, p, g, i, &cfg)?.total)
        });
        out.push(check("total loss composition", vec![logits], &plain, f, OP_TOLERANCE)?);
    }
    out.push(network_check(seed)?);
    Ok(out)
}

fn softmax_values(logits: &Tensor<f64>) -> Result<Tensor<f64>> {
    let mut t = Tape::new();
    let x = t.constant(logits.clone());
    let p = t.softmax_channels(x)?;
    Ok(t.value(p).clone())
}

/// Whole network plus total loss at a small width, checked on a sample of
/// coordinates of every parameter tensor.
pub fn network_check(seed: u64) -> Result<CheckOutcome> {
    let arch = ArchConfig::default().with_scale(16, 1.0 / 32.0);
    let store = build(&arch, Head::Semantic, seed)?.cast::<f64>();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let names: Vec<String> = store.names().map(str::to_string).collect();
    let mut inputs: Vec<Tensor<f64>> = store
        .iter()
        .map(|(_, t)| {
            // non-zero biases keep relu inputs away from exact zeros
            let mut t = t.clone();
            if t.shape().len() == 1 {
                t.data_mut().iter_mut().for_each(|v| *v = rng.random_range(0.05..0.2));
            }
            t.with_requires_grad(true)
        })
        .collect();
    let image = rand_tensor(&mut rng, &[1, 1, 16, 16], 0.0, 1.0);
    let target = {
        let mut t = Tape::<f64>::new();
        let params = ParamVars::register(&mut t, &store, false);
        let x = t.constant(image.clone());
        let p = Network { cfg: &arch, tape: &mut t, params: &params, trace: None }.forward(x, Head::Semantic)?;
        let shifted: Vec<u8> = hard_labels(t.value(p))?.iter().map(|&l| (l + 1) % 5).collect();
        let mut oh = Tensor::zeros(&[1, 5, 16, 16]);
        for (i, &l) in shifted.iter().enumerate() {
            oh.data_mut()[l as usize * 256 + i] = 1.0;
        }
        oh
    };
    inputs.push(image);
    let cfg = LossConfig { beta_softargmax: 50.0, lambda: 0.5, ..LossConfig::default() };
    let gc = GradCheck { max_coords: Some(20), seed, ..GradCheck::default() };
    let f: Program = Box::new(move |t, v| {
        let params = ParamVars::from_vars(names.iter().cloned().zip(v.iter().copied()));
        let x = v[v.len() - 1];
        let p = Network { cfg: &arch, tape: &mut *t, params: &params, trace: None }.forward(x, Head::Semantic)?;
        let g = t.constant(target.clone());
        Ok(total_loss(t, p, g, x, &cfg)?.total)
    });
    let r = grad_check(&inputs, &gc, f)?;
    Ok(CheckOutcome::strict("network + total loss (beta 50)", r.max_rel_error, NETWORK_TOLERANCE))
}

/// Random label map: either i.i.d. labels or overlapping rectangles.
pub fn random_label_map(rng: &mut ChaCha8Rng, w: usize, h: usize) -> LabelMap {
    let mut labels = vec![0u8; w * h];
    if rng.random_bool(0.5) {
        let k = rng.random_range(1..=5);
        labels.iter_mut().for_each(|l| *l = rng.random_range(0..k));
    } else {
        for _ in 0..rng.random_range(1..8) {
            let (x0, y0) = (rng.random_range(0..w), rng.random_range(0..h));
            let (x1, y1) = (rng.random_range(x0..w) + 1, rng.random_range(y0..h) + 1);
            let c = rng.random_range(0..5);
            for y in y0..y1 {
                labels[y * w + x0..y * w + x1].iter_mut().for_each(|l| *l = c);
            }
        }
    }
    LabelMap::new(w, h, labels).expect("labels in range")
}

fn smoothness_pair(v: &[f64], labels: &[u8], img: &[f64], n: usize, h: usize, w: usize) -> Result<(f64, f64)> {
    let p = SmoothnessParams::default();
    let mut t = Tape::<f64>::new();
    let vv = t.constant(Tensor::new(&[n, 1, h, w], v.to_vec())?);
    let iv = t.constant(Tensor::new(&[n, 1, h, w], img.to_vec())?);
    let l = t.smoothness_loss(vv, labels, iv, p)?;
    Ok((t.value(l).item()?, smoothness_oracle(n, h, w, v, labels, img, &p)))
}

/// Smoothness loss against the double loop on `cases` random 8x8 inputs.
pub fn smoothness_oracle_check(cases: usize, seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let n = rng.random_range(1..3);
        let len = n * 64;
        let v: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..4.0)).collect();
        let labels: Vec<u8> = (0..len).map(|_| rng.random_range(0..5)).collect();
        let img: Vec<f64> = (0..len).map(|_| rng.random()).collect();
        let (fast, slow) = smoothness_pair(&v, &labels, &img, n, 8, 8)?;
        worst = worst.max((fast - slow).abs());
    }
    let v: Vec<f64> = (0..64).map(|_| rng.random_range(0.0..4.0)).collect();
    let img: Vec<f64> = (0..64).map(|_| rng.random()).collect();
    let (uniform, uniform_oracle) = smoothness_pair(&v, &[3; 64], &img, 1, 8, 8)?;
    let (equal_pair, _) = smoothness_pair(&[1.2, 0.7], &[2, 2], &[0.0, 0.9], 1, 1, 2)?;
    Ok(vec![
        CheckOutcome::new(format!("smoothness vs oracle ({cases} cases)"), worst, 1e-10),
        CheckOutcome::new("smoothness uniform labels", uniform.abs().max(uniform_oracle.abs()), 0.0),
        CheckOutcome::new("smoothness equal-label pair", equal_pair.abs(), 0.0),
    ])
}

fn inflate(w: &Tensor<f32>, d: usize) -> Tensor<f32> {
    let s = w.shape();
    let (co, ci, kh, kw) = (s[0], s[1], s[2], s[3]);
    let (eh, ew) = ((kh - 1) * d + 1, (kw - 1) * d + 1);
    let mut out = Tensor::zeros(&[co, ci, eh, ew]);
    for o in 0..co {
        for i in 0..ci {
            for y in 0..kh {
                for x in 0..kw {
                    out.data_mut()[((o * ci + i) * eh + y * d) * ew + x * d] = w.data()[((o * ci + i) * kh + y) * kw + x];
                }
            }
        }
    }
    out
}

/// Dilated convolution against the undilated convolution of the inflated
/// kernel, single precision.
pub fn dilation_check(cases: usize, seed: u64) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let d = rng.random_range(1..=4);
        let k = [1, 3, 5][rng.random_range(0..3)];
        let (ci, co) = (rng.random_range(1..4), rng.random_range(1..4));
        let (h, w) = (rng.random_range(4..12), rng.random_range(4..12));
        let x = Tensor::from_fn(&[2, ci, h, w], |_| rng.random_range(-1.0f32..1.0));
        let wt = Tensor::from_fn(&[co, ci, k, k], |_| rng.random_range(-1.0f32..1.0));
        let b = Tensor::from_fn(&[co], |_| rng.random_range(-1.0f32..1.0));
        let mut t = Tape::<f32>::new();
        let (xv, bv) = (t.constant(x), t.constant(b));
        let (wv, iv) = (t.constant(wt.clone()), t.constant(inflate(&wt, d)));
        let a = t.conv2d(xv, wv, bv, d)?;
        let c = t.conv2d(xv, iv, bv, 1)?;
        for (p, q) in t.value(a).data().iter().zip(t.value(c).data()) {
            worst = worst.max((p - q).abs() as f64);
        }
    }
    Ok(CheckOutcome::new(format!("dilated conv equivalence ({cases} cases)"), worst, 1e-5))
}

/// Metric implementations against pairwise brute force; `value` counts
/// mismatching entries.
pub fn metrics_oracle_check(maps: usize, seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut iou_bad, mut hd_bad, mut aad_bad, mut boundary_bad) = (0, 0, 0, 0);
    for _ in 0..maps {
        let pred = random_label_map(&mut rng, 32, 32);
        let gt = random_label_map(&mut rng, 32, 32);
        for c in 0..5u8 {
            boundary_bad += (boundary_pixels(&pred, c) != boundary_oracle(&pred, c)) as usize;
            iou_bad += (iou(&pred, &gt, c)? != iou_oracle(&pred, &gt, c)) as usize;
            hd_bad += (hausdorff(&pred, &gt, c)? != hausdorff_oracle(&pred, &gt, c)) as usize;
            aad_bad += (aad(&pred, &gt, c)? != aad_oracle(&pred, &gt, c)) as usize;
        }
    }
    let square = |y0: usize| {
        let labels = (0..6 * 14).map(|i| ((i / 6) >= y0 && (i / 6) < y0 + 6) as u8 * 2).collect();
        LabelMap::new(6, 14, labels).expect("labels in range")
    };
    let (a, b) = (square(3), square(4));
    let hd1 = hausdorff(&a, &b, 2)?.unwrap_or(f64::NAN);
    let aad1 = aad(&a, &b, 2)?.unwrap_or(f64::NAN);
    Ok(vec![
        CheckOutcome::new(format!("boundary vs oracle ({maps} maps)"), boundary_bad as f64, 0.0),
        CheckOutcome::new(format!("iou vs counting ({maps} maps)"), iou_bad as f64, 0.0),
        CheckOutcome::new(format!("hausdorff vs pairwise ({maps} maps)"), hd_bad as f64, 0.0),
        CheckOutcome::new(format!("aad vs pairwise ({maps} maps)"), aad_bad as f64, 0.0),
        CheckOutcome::new("translated square hd = 1", (hd1 - 1.0).abs(), 0.0),
        CheckOutcome::new("translated square aad = 1", (aad1 - 1.0).abs(), 0.0),
    ])
}

/// Loss, convolution and metric comparisons against reference code.
pub fn oracle_suite(seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut out = smoothness_oracle_check(100, seed)?;
    out.push(dilation_check(50, seed)?);
    out.extend(metrics_oracle_check(200, seed)?);
    Ok(out)
}
