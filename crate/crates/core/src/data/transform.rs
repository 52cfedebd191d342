use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Sample;
use crate::classes::{ClassOrder, NUM_CLASSES};
use crate::error::{shape_err, Error, Result};
use crate::tensor::{Real, Tensor};

/// Zero-pad the shorter axis symmetrically; padded mask pixels get the
/// background label. An odd remainder goes to the trailing side.
pub fn pad_to_square(s: &Sample, order: &ClassOrder) -> Sample {
    let (w, h) = (s.width(), s.height());
    let n = w.max(h);
    if w == h {
        return s.clone();
    }
    let (left, top) = ((n - w) / 2, (n - h) / 2);
    let mut image = vec![0u8; n * n];
    let mut mask = vec![order.background(); n * n];
    for y in 0..h {
        let dst = (y + top) * n + left;
        image[dst..dst + w].copy_from_slice(&s.image()[y * w..(y + 1) * w]);
        mask[dst..dst + w].copy_from_slice(&s.mask()[y * w..(y + 1) * w]);
    }
    Sample { image, mask, width: n, height: n, ..s.clone() }
}

/// Centred crop to `width` x `height`, inverting [`pad_to_square`].
pub fn crop(s: &Sample, width: usize, height: usize) -> Result<Sample> {
    if width > s.width() || height > s.height() {
        return Err(shape_err(
            "crop",
            format!("{width}x{height} exceeds {}x{}", s.width(), s.height()),
        ));
    }
    let (left, top) = ((s.width() - width) / 2, (s.height() - height) / 2);
    let mut image = Vec::with_capacity(width * height);
    let mut mask = Vec::with_capacity(width * height);
    for y in top..top + height {
        let r = y * s.width() + left;
        image.extend_from_slice(&s.image()[r..r + width]);
        mask.extend_from_slice(&s.mask()[r..r + width]);
    }
    Ok(Sample { image, mask, width, height, ..s.clone() })
}

/// Bilinear image, nearest-neighbour mask, pixel-centre aligned.
pub fn resize(s: &Sample, size: usize) -> Result<Sample> {
    if !s.is_square() {
        return Err(shape_err(
            "resize",
            format!("input {}x{} is not square; pad first", s.width(), s.height()),
        ));
    }
    if size == 0 {
        return Err(Error::InvalidArgument("resize to zero pixels".into()));
    }
    let n = s.width();
    if n == size {
        return Ok(s.clone());
    }
    let scale = n as f64 / size as f64;
    let src = |d: usize| ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (n - 1) as f64);
    let near = |d: usize| (((d as f64 + 0.5) * scale) as usize).min(n - 1);
    let mut image = vec![0u8; size * size];
    let mut mask = vec![0u8; size * size];
    for y in 0..size {
        let sy = src(y);
        let ny = near(y);
        for x in 0..size {
            let v = bilinear(s.image(), n, n, src(x), sy).expect("inside source");
            image[y * size + x] = v.round().clamp(0.0, 255.0) as u8;
            mask[y * size + x] = s.mask()[ny * n + near(x)];
        }
    }
    Ok(Sample { image, mask, width: size, height: size, ..s.clone() })
}

/// Bilinear sample at continuous pixel coordinates, `None` outside the grid.
fn bilinear(img: &[u8], w: usize, h: usize, x: f64, y: f64) -> Option<f64> {
    if !(x >= 0.0 && y >= 0.0 && x <= (w - 1) as f64 && y <= (h - 1) as f64) {
        return None;
    }
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let p = |xx: usize, yy: usize| img[yy * w + xx] as f64;
    if fx == 0.0 && fy == 0.0 {
        return Some(p(x0, y0));
    }
    let top = p(x0, y0) * (1.0 - fx) + p(x1, y0) * fx;
    let bot = p(x0, y1) * (1.0 - fx) + p(x1, y1) * fx;
    Some(top * (1.0 - fy) + bot * fy)
}

/// Rotate about the image centre by `degrees` (counter-clockwise on screen).
/// Pixels whose source falls outside the image become 0 / background.
pub fn rotate(s: &Sample, degrees: f64, order: &ClassOrder) -> Sample {
    if degrees == 0.0 {
        return s.clone();
    }
    let (w, h) = (s.width(), s.height());
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let (sin, cos) = degrees.to_radians().sin_cos();
    let bg = order.background();
    let mut image = vec![0u8; w * h];
    let mut mask = vec![bg; w * h];
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            // inverse rotation, y axis pointing down
            let sx = cos * dx - sin * dy + cx;
            let sy = sin * dx + cos * dy + cy;
            let i = y * w + x;
            if let Some(v) = bilinear(s.image(), w, h, sx, sy) {
                image[i] = v.round().clamp(0.0, 255.0) as u8;
            }
            let (nx, ny) = (sx.round(), sy.round());
            if nx >= 0.0 && ny >= 0.0 && (nx as usize) < w && (ny as usize) < h {
                mask[i] = s.mask()[ny as usize * w + nx as usize];
            }
        }
    }
    Sample { image, mask, ..s.clone() }
}

pub fn flip_horizontal(s: &Sample) -> Sample {
    let w = s.width();
    let flip = |v: &[u8]| -> Vec<u8> { v.chunks(w).flat_map(|r| r.iter().rev().copied()).collect() };
    Sample { image: flip(s.image()), mask: flip(s.mask()), ..s.clone() }
}

/// Integer shift with zero / background fill.
pub fn translate(s: &Sample, dx: i64, dy: i64, order: &ClassOrder) -> Sample {
    let (w, h) = (s.width() as i64, s.height() as i64);
    let bg = order.background();
    let mut image = vec![0u8; s.image().len()];
    let mut mask = vec![bg; s.mask().len()];
    for y in 0..h {
        let sy = y - dy;
        if !(0..h).contains(&sy) {
            continue;
        }
        for x in 0..w {
            let sx = x - dx;
            if (0..w).contains(&sx) {
                let (i, j) = ((y * w + x) as usize, (sy * w + sx) as usize);
                image[i] = s.image()[j];
                mask[i] = s.mask()[j];
            }
        }
    }
    Sample { image, mask, ..s.clone() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Rotation drawn uniformly from +/- this many degrees.
    pub max_rotation: f64,
    pub flip_probability: f64,
    /// Translation drawn uniformly from +/- this many pixels per axis.
    pub max_translation: i64,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig { max_rotation: 20.0, flip_probability: 0.5, max_translation: 5, seed: 0 }
    }
}

impl AugmentConfig {
    /// No-op configuration.
    pub fn identity() -> Self {
        AugmentConfig { max_rotation: 0.0, flip_probability: 0.0, max_translation: 0, seed: 0 }
    }
}

/// Random rotation, horizontal flip and translation, in that order.
pub fn augment<R: Rng>(s: &Sample, cfg: &AugmentConfig, order: &ClassOrder, rng: &mut R) -> Result<Sample> {
    if !s.is_square() {
        return Err(shape_err("augment", format!("input {}x{} is not square", s.width(), s.height())));
    }
    let angle = if cfg.max_rotation > 0.0 { rng.random_range(-cfg.max_rotation..=cfg.max_rotation) } else { 0.0 };
    let flip = cfg.flip_probability > 0.0 && rng.random::<f64>() < cfg.flip_probability;
    let t = cfg.max_translation.abs();
    let (dx, dy) = (rng.random_range(-t..=t), rng.random_range(-t..=t));
    let mut out = rotate(s, angle, order);
    if flip {
        out = flip_horizontal(&out);
    }
    Ok(translate(&out, dx, dy, order))
}

/// Image scaled to [0, 1] as `[1, H, W]`, mask one-hot as `[5, H, W]`.
pub fn normalize<T: Real>(s: &Sample) -> (Tensor<T>, Tensor<T>) {
    let (w, h) = (s.width(), s.height());
    let scale = T::from_f64(1.0 / 255.0);
    let image = Tensor::new(&[1, h, w], s.image().iter().map(|&p| T::from_f64(p as f64) * scale).collect())
        .expect("sample dimensions");
    let plane = w * h;
    let mut onehot = vec![T::zero(); NUM_CLASSES * plane];
    for (i, &l) in s.mask().iter().enumerate() {
        onehot[l as usize * plane + i] = T::one();
    }
    let onehot = Tensor::new(&[NUM_CLASSES, h, w], onehot).expect("sample dimensions");
    (image, onehot)
}

/// Argmax over the leading class axis of a `[K, H, W]` tensor.
pub fn one_hot_to_mask<T: Real>(t: &Tensor<T>) -> Result<Vec<u8>> {
    if t.shape().len() != 3 {
        return Err(shape_err("one_hot_to_mask", format!("expected [K,H,W], got {:?}", t.shape())));
    }
    let (k, plane) = (t.shape()[0], t.shape()[1] * t.shape()[2]);
    Ok((0..plane)
        .map(|i| {
            (0..k)
                .fold((0usize, T::neg_infinity()), |(bi, bv), c| {
                    let v = t.data()[c * plane + i];
                    if v > bv { (c, v) } else { (bi, bv) }
                })
                .0 as u8
        })
        .collect())
}
