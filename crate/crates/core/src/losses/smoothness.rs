//! Pairwise smoothness loss over 8-connected neighbourhoods.
//!
//! For each pixel `i`, every in-bounds neighbour `j` with a different hard
//! label contributes
//! `exp(-(I_i - I_j)^2 / sigma_alpha) * exp((V_i - V_j)^2 / sigma_beta) / d_ij`,
//! normalised by the number of such neighbours plus `epsilon`. The loss is the
//! mean over pixels, averaged over the batch. Hard labels and intensities are
//! constants; gradients flow only through the continuous labels `V`.
//!
//! The kernels here sweep one neighbour offset at a time over whole planes.
//! [`super::oracle`] evaluates the same quantity pixel by pixel.

use super::SmoothnessParams;
use crate::par;
use crate::tensor::Real;

/// Neighbour displacements `(dy, dx)` and inverse Euclidean distance.
pub const NEIGHBORS: [(isize, isize, f64); 8] = [
    (-1, 0, 1.0),
    (1, 0, 1.0),
    (0, -1, 1.0),
    (0, 1, 1.0),
    (-1, -1, std::f64::consts::FRAC_1_SQRT_2),
    (-1, 1, std::f64::consts::FRAC_1_SQRT_2),
    (1, -1, std::f64::consts::FRAC_1_SQRT_2),
    (1, 1, std::f64::consts::FRAC_1_SQRT_2),
];

/// The 8-neighbourhood with its distance weighting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborWeighting {
    pub offsets: [(isize, isize); 8],
    pub inverse_distance: [f64; 8],
}

impl Default for NeighborWeighting {
    fn default() -> Self {
        Self {
            offsets: NEIGHBORS.map(|(dy, dx, _)| (dy, dx)),
            inverse_distance: NEIGHBORS.map(|(_, _, w)| w),
        }
    }
}

/// Product of the intensity-affinity and label-distance factors for one pair.
pub fn pair_weight(intensity_gap: f64, label_gap: f64, p: &SmoothnessParams) -> f64 {
    (-(intensity_gap * intensity_gap) / p.sigma_alpha).exp()
        * ((label_gap * label_gap) / p.sigma_beta).exp()
}

struct Consts<T> {
    inv_sa: T,
    inv_sb: T,
    eps: T,
}

impl<T: Real> Consts<T> {
    fn new(p: &SmoothnessParams) -> Self {
        Self {
            inv_sa: T::from_f64(1.0 / p.sigma_alpha),
            inv_sb: T::from_f64(1.0 / p.sigma_beta),
            eps: T::from_f64(p.epsilon),
        }
    }

    #[inline]
    fn term(&self, di: T, dv: T) -> T {
        (-(di * di) * self.inv_sa).exp() * (dv * dv * self.inv_sb).exp()
    }
}

/// Row/column range of pixels whose neighbour at `(dy, dx)` is in bounds.
#[inline]
fn span(len: usize, d: isize) -> std::ops::Range<usize> {
    let lo = (-d).max(0) as usize;
    let hi = (len as isize - d).clamp(0, len as isize) as usize;
    lo..hi.max(lo)
}

/// Number of differently-labelled in-bounds neighbours of every pixel.
fn disagreement_counts(h: usize, w: usize, lab: &[u8]) -> Vec<u32> {
    let mut cnt = vec![0u32; h * w];
    for &(dy, dx, _) in &NEIGHBORS {
        for y in span(h, dy) {
            let jy = (y as isize + dy) as usize;
            for x in span(w, dx) {
                let jx = (x as isize + dx) as usize;
                if lab[y * w + x] != lab[jy * w + jx] {
                    cnt[y * w + x] += 1;
                }
            }
        }
    }
    cnt
}

fn image_loss<T: Real>(h: usize, w: usize, v: &[T], lab: &[u8], img: &[T], k: &Consts<T>) -> T {
    let cnt = disagreement_counts(h, w, lab);
    let mut num = vec![T::zero(); h * w];
    for &(dy, dx, invd) in &NEIGHBORS {
        let invd = T::from_f64(invd);
        for y in span(h, dy) {
            let jy = (y as isize + dy) as usize;
            for x in span(w, dx) {
                let (i, j) = (y * w + x, jy * w + (x as isize + dx) as usize);
                if lab[i] != lab[j] {
                    num[i] = num[i] + k.term(img[i] - img[j], v[i] - v[j]) * invd;
                }
            }
        }
    }
    let s = num
        .iter()
        .zip(&cnt)
        .map(|(&nv, &c)| nv / (T::from_f64(c as f64) + k.eps))
        .sum::<T>();
    s / T::from_f64((h * w) as f64)
}

pub fn forward<T: Real>(
    n: usize,
    h: usize,
    w: usize,
    v: &[T],
    labels: &[u8],
    image: &[T],
    p: &SmoothnessParams,
) -> T {
    let k = Consts::new(p);
    let plane = h * w;
    let per_image = par::map_indices(n, |b| {
        let r = b * plane..(b + 1) * plane;
        image_loss(h, w, &v[r.clone()], &labels[r.clone()], &image[r], &k)
    });
    per_image.into_iter().sum::<T>() / T::from_f64(n as f64)
}

#[allow(clippy::too_many_arguments)]
pub fn backward<T: Real>(
    n: usize,
    h: usize,
    w: usize,
    v: &[T],
    labels: &[u8],
    image: &[T],
    p: &SmoothnessParams,
    gout: T,
) -> Vec<T> {
    let k = Consts::new(p);
    let plane = h * w;
    let scale = gout / T::from_f64((n * plane) as f64);
    let two = T::from_f64(2.0);
    let mut dv = vec![T::zero(); n * plane];
    par::for_each_chunk(&mut dv, plane, |b, d| {
        let r = b * plane..(b + 1) * plane;
        let (v, lab, img) = (&v[r.clone()], &labels[r.clone()], &image[r]);
        let cnt = disagreement_counts(h, w, lab);
        for &(dy, dx, invd) in &NEIGHBORS {
            let invd = T::from_f64(invd);
            for y in span(h, dy) {
                let jy = (y as isize + dy) as usize;
                for x in span(w, dx) {
                    let (i, j) = (y * w + x, jy * w + (x as isize + dx) as usize);
                    if lab[i] == lab[j] {
                        continue;
                    }
                    let gap = v[i] - v[j];
                    let t = k.term(img[i] - img[j], gap) * invd * scale
                        / (T::from_f64(cnt[i] as f64) + k.eps);
                    let g = t * two * gap * k.inv_sb;
                    d[i] = d[i] + g;
                    d[j] = d[j] - g;
                }
            }
        }
    });
    dv
}
