//! Differentiable relaxation of the per-pixel argmax label.

use crate::tensor::Real;

/// `V = sum_c c * exp(beta p_c) / sum_c exp(beta p_c)` per pixel, with the
/// per-pixel maximum subtracted before exponentiation.
pub fn forward<T: Real>(n: usize, k: usize, plane: usize, p: &[T], beta: f64) -> Vec<T> {
    let beta = T::from_f64(beta);
    let mut v = vec![T::zero(); n * plane];
    let mut e = vec![T::zero(); k];
    for b in 0..n {
        for px in 0..plane {
            let at = |c: usize| p[(b * k + c) * plane + px];
            let m = (0..k).map(at).fold(T::neg_infinity(), T::max);
            let (mut num, mut den) = (T::zero(), T::zero());
            for (c, ec) in e.iter_mut().enumerate() {
                *ec = (beta * (at(c) - m)).exp();
                num = num + T::from_f64(c as f64) * *ec;
                den = den + *ec;
            }
            v[b * plane + px] = num / den;
        }
    }
    v
}

/// `dV/dp_c = beta * w_c * (c - V)` with `w = softmax(beta p)`.
pub fn backward<T: Real>(
    n: usize,
    k: usize,
    plane: usize,
    p: &[T],
    v: &[T],
    beta: f64,
    gv: &[T],
) -> Vec<T> {
    let beta = T::from_f64(beta);
    let mut dp = vec![T::zero(); p.len()];
    let mut e = vec![T::zero(); k];
    for b in 0..n {
        for px in 0..plane {
            let idx = |c: usize| (b * k + c) * plane + px;
            let m = (0..k).map(|c| p[idx(c)]).fold(T::neg_infinity(), T::max);
            let mut den = T::zero();
            for (c, ec) in e.iter_mut().enumerate() {
                *ec = (beta * (p[idx(c)] - m)).exp();
                den = den + *ec;
            }
            let (vi, g) = (v[b * plane + px], gv[b * plane + px]);
            for (c, &ec) in e.iter().enumerate() {
                dp[idx(c)] = g * beta * (ec / den) * (T::from_f64(c as f64) - vi);
            }
        }
    }
    dp
}
