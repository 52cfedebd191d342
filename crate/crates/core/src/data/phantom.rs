use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Sample;
use crate::classes::{ClassOrder, TissueClass, NUM_CLASSES};
use crate::error::{Error, Result};

/// Generator settings for layered phantoms.
///
/// Lengths are fractions of the canvas unless noted. Interfaces are the
/// top of fat, fat/mammary, mammary/muscle and the bottom of muscle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomParams {
    pub width: usize,
    pub height: usize,
    pub interfaces: [f64; 4],
    /// Uniform per-phantom shift of each interface, +/- this much.
    pub interface_jitter: f64,
    /// Maximum sinusoidal amplitude of each interface.
    pub waviness: f64,
    /// Range of the number of waves across the width.
    pub wave_cycles: (f64, f64),
    pub tumor_probability: f64,
    pub tumor_center_x: (f64, f64),
    pub tumor_semi_x: (f64, f64),
    pub tumor_semi_y: (f64, f64),
    /// Degrees, symmetric.
    pub tumor_max_rotation: f64,
    /// Mean intensity per tissue class, indexed like [`TissueClass::ALL`].
    pub intensity: [f64; NUM_CLASSES],
    /// Standard deviation of the per-phantom class intensity offset.
    pub contrast: f64,
    /// Multiplicative speckle strength (std of the smoothed noise).
    pub speckle: f64,
    /// Box radius in pixels used to smooth the speckle field.
    pub speckle_radius: usize,
    pub class_order: ClassOrder,
}

impl Default for PhantomParams {
    fn default() -> Self {
        PhantomParams {
            width: 96,
            height: 80,
            interfaces: [0.14, 0.32, 0.70, 0.86],
            interface_jitter: 0.02,
            waviness: 0.02,
            wave_cycles: (0.5, 2.0),
            tumor_probability: 1.0,
            tumor_center_x: (0.35, 0.65),
            tumor_semi_x: (0.19, 0.26),
            tumor_semi_y: (0.10, 0.14),
            tumor_max_rotation: 15.0,
            intensity: [20.0, 90.0, 170.0, 50.0, 120.0],
            contrast: 8.0,
            speckle: 0.25,
            speckle_radius: 1,
            class_order: ClassOrder::default(),
        }
    }
}

impl PhantomParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |field, reason: String| Err(Error::Config { field, reason });
        if self.width < 8 || self.height < 8 {
            return bad("canvas", format!("{}x{} is too small", self.width, self.height));
        }
        let f = &self.interfaces;
        if f[0] <= 0.0 || f[3] >= 1.0 {
            return bad("interfaces", "must lie strictly inside (0, 1)".into());
        }
        let slack = 2.0 * (self.interface_jitter + self.waviness);
        for i in 0..3 {
            if f[i + 1] - f[i] <= slack {
                return bad(
                    "interfaces",
                    format!("bands {i} and {} may cross: gap {} <= {slack}", i + 1, f[i + 1] - f[i]),
                );
            }
        }
        if self.interface_jitter < 0.0 || self.waviness < 0.0 {
            return bad("waviness", "must be non-negative".into());
        }
        for (name, (lo, hi)) in [
            ("wave_cycles", self.wave_cycles),
            ("tumor_center_x", self.tumor_center_x),
            ("tumor_semi_x", self.tumor_semi_x),
            ("tumor_semi_y", self.tumor_semi_y),
        ] {
            if !(lo <= hi && lo >= 0.0) {
                return bad(name, format!("range ({lo}, {hi}) is not ordered and non-negative"));
            }
        }
        if !(0.0..=1.0).contains(&self.tumor_probability) {
            return bad("tumor_probability", "must be in [0, 1]".into());
        }
        if self.tumor_semi_x.0 <= 0.0 || self.tumor_semi_y.0 <= 0.0 {
            return bad("tumor_semi", "axes must be positive".into());
        }
        if 2.0 * self.tumor_semi_y.1 >= f[2] - f[1] - slack {
            return bad("tumor_semi_y", "tumor taller than the mammary band".into());
        }
        if self.intensity.iter().any(|&v| !(0.0..=255.0).contains(&v)) || self.contrast < 0.0 || self.speckle < 0.0 {
            return bad("intensity", "intensities must be in [0, 255], spreads non-negative".into());
        }
        self.class_order.validate()
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

struct Interface {
    base: f64,
    amp: f64,
    cycles: f64,
    phase: f64,
}

impl Interface {
    fn at(&self, x: f64, width: f64) -> f64 {
        self.base + self.amp * (2.0 * PI * self.cycles * x / width + self.phase).sin()
    }
}

/// Deterministic phantom for `seed`.
pub fn generate_phantom(params: &PhantomParams, seed: u64) -> Result<Sample> {
    params.validate()?;
    let (w, h) = (params.width, params.height);
    let (wf, hf) = (w as f64, h as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order = &params.class_order;

    let interfaces: Vec<Interface> = params
        .interfaces
        .iter()
        .map(|&f| Interface {
            base: hf * (f + uniform(&mut rng, (-params.interface_jitter, params.interface_jitter))),
            amp: hf * uniform(&mut rng, (0.0, params.waviness)),
            cycles: uniform(&mut rng, params.wave_cycles),
            phase: uniform(&mut rng, (0.0, 2.0 * PI)),
        })
        .collect();
    let bands = [
        TissueClass::Background,
        TissueClass::Fat,
        TissueClass::Mammary,
        TissueClass::Muscle,
        TissueClass::Background,
    ];
    let mut mask = vec![0u8; w * h];
    for x in 0..w {
        let xc = x as f64 + 0.5;
        let cuts: Vec<f64> = interfaces.iter().map(|i| i.at(xc, wf)).collect();
        for y in 0..h {
            let yc = y as f64 + 0.5;
            let band = cuts.iter().take_while(|&&c| yc >= c).count();
            mask[y * w + x] = order.label(bands[band]);
        }
    }

    let has_tumor = rng.random::<f64>() < params.tumor_probability;
    let cx = wf * uniform(&mut rng, params.tumor_center_x);
    let cy = 0.5 * (interfaces[1].at(cx, wf) + interfaces[2].at(cx, wf));
    let ax = wf * uniform(&mut rng, params.tumor_semi_x);
    let ay = hf * uniform(&mut rng, params.tumor_semi_y);
    let rot = uniform(&mut rng, (-params.tumor_max_rotation, params.tumor_max_rotation)).to_radians();
    if has_tumor {
        let (mammary, tumor) = (order.label(TissueClass::Mammary), order.label(TissueClass::Tumor));
        let (s, c) = rot.sin_cos();
        for y in 0..h {
            for x in 0..w {
                let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                let u = (c * dx + s * dy) / ax;
                let v = (-s * dx + c * dy) / ay;
                let i = y * w + x;
                if u * u + v * v <= 1.0 && mask[i] == mammary {
                    mask[i] = tumor;
                }
            }
        }
    }

    let offset = Normal::new(0.0, params.contrast.max(f64::MIN_POSITIVE)).expect("finite std");
    let mean: Vec<f64> = (0..NUM_CLASSES)
        .map(|l| {
            let class = order.class(l as u8);
            let k = TissueClass::ALL.iter().position(|&c| c == class).unwrap();
            params.intensity[k] + if params.contrast > 0.0 { offset.sample(&mut rng) } else { 0.0 }
        })
        .collect();
    let noise = speckle_field(&mut rng, w, h, params.speckle_radius);
    let image = mask
        .iter()
        .zip(&noise)
        .map(|(&l, &z)| (mean[l as usize] * (1.0 + params.speckle * z)).round().clamp(0.0, 255.0) as u8)
        .collect();
    Sample::new(format!("phantom_{seed}"), seed, w, h, image, mask)
}

/// Box-smoothed standard normal noise rescaled to unit variance.
fn speckle_field(rng: &mut ChaCha8Rng, w: usize, h: usize, r: usize) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let raw: Vec<f64> = (0..w * h).map(|_| normal.sample(rng)).collect();
    if r == 0 {
        return raw;
    }
    let ri = r as isize;
    let mut out = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut acc = 0.0;
            let mut n = 0usize;
            for dy in -ri..=ri {
                for dx in -ri..=ri {
                    let (xx, yy) = (x + dx, y + dy);
                    if xx >= 0 && yy >= 0 && (xx as usize) < w && (yy as usize) < h {
                        acc += raw[yy as usize * w + xx as usize];
                        n += 1;
                    }
                }
            }
            out[y as usize * w + x as usize] = acc / (n as f64).sqrt();
        }
    }
    out
}
