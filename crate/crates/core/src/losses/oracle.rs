//! Reference evaluation of the smoothness loss: one pixel at a time, one
//! neighbour at a time, in double precision. Used only to cross-check the
//! plane-sweeping kernels.

use super::SmoothnessParams;

/// `v`, `labels` and `image` are `[n, h, w]` row-major.
pub fn smoothness_oracle(
    n: usize,
    h: usize,
    w: usize,
    v: &[f64],
    labels: &[u8],
    image: &[f64],
    p: &SmoothnessParams,
) -> f64 {
    let mut batch_total = 0.0;
    for b in 0..n {
        let at = |y: usize, x: usize| b * h * w + y * w + x;
        let mut image_total = 0.0;
        for y in 0..h {
            for x in 0..w {
                let i = at(y, x);
                let mut numerator = 0.0;
                let mut denominator = 0.0;
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        if dy == 0 && dx == 0 {
                            continue;
                        }
                        let (ny, nx) = (y as i64 + dy, x as i64 + dx);
                        if ny < 0 || nx < 0 || ny >= h as i64 || nx >= w as i64 {
                            continue;
                        }
                        let j = at(ny as usize, nx as usize);
                        let delta = if labels[i] != labels[j] { 1.0 } else { 0.0 };
                        let d = ((dy * dy + dx * dx) as f64).sqrt();
                        let pixel = (-(image[i] - image[j]).powi(2) / p.sigma_alpha).exp();
                        let label = ((v[i] - v[j]).powi(2) / p.sigma_beta).exp();
                        numerator += delta * pixel * label / d;
                        denominator += delta;
                    }
                }
                image_total += numerator / (denominator + p.epsilon);
            }
        }
        batch_total += image_total / (h * w) as f64;
    }
    batch_total / n as f64
}
