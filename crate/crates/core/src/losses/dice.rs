//! Soft Dice loss averaged over batch items and classes.

use crate::error::{Error, Result};
use crate::tensor::Real;

/// Rejects targets that are not exactly one-hot along the class axis.
pub fn check_one_hot<T: Real>(n: usize, k: usize, plane: usize, g: &[T]) -> Result<()> {
    for b in 0..n {
        for p in 0..plane {
            let mut ones = 0;
            for c in 0..k {
                let v = g[(b * k + c) * plane + p];
                if v == T::one() {
                    ones += 1;
                } else if v != T::zero() {
                    return Err(Error::InvalidArgument(format!(
                        "dice target is not one-hot: value {v:?} at batch {b}, class {c}, pixel {p}"
                    )));
                }
            }
            if ones != 1 {
                return Err(Error::InvalidArgument(format!(
                    "dice target is not one-hot: {ones} active classes at batch {b}, pixel {p}"
                )));
            }
        }
    }
    Ok(())
}

/// Per-(item, class) sums `(sum p*g, sum p + sum g)`.
fn overlap<T: Real>(p: &[T], g: &[T]) -> (T, T) {
    let (mut inter, mut total) = (T::zero(), T::zero());
    for (&pv, &gv) in p.iter().zip(g) {
        inter = inter + pv * gv;
        total = total + pv + gv;
    }
    (inter, total)
}

pub fn forward<T: Real>(n: usize, k: usize, plane: usize, p: &[T], g: &[T], smooth: f64) -> T {
    let s = T::from_f64(smooth);
    let two = T::from_f64(2.0);
    let mut acc = T::zero();
    for i in 0..n * k {
        let (inter, total) = overlap(&p[i * plane..][..plane], &g[i * plane..][..plane]);
        acc = acc + (two * inter + s) / (total + s);
    }
    T::one() - acc / T::from_f64((n * k) as f64)
}

pub fn backward<T: Real>(
    n: usize,
    k: usize,
    plane: usize,
    p: &[T],
    g: &[T],
    smooth: f64,
    gout: T,
) -> Vec<T> {
    let s = T::from_f64(smooth);
    let two = T::from_f64(2.0);
    let coef = -gout / T::from_f64((n * k) as f64);
    let mut dp = vec![T::zero(); p.len()];
    for i in 0..n * k {
        let (ps, gs) = (&p[i * plane..][..plane], &g[i * plane..][..plane]);
        let (inter, total) = overlap(ps, gs);
        let den = total + s;
        let num = two * inter + s;
        let d = &mut dp[i * plane..][..plane];
        for (dv, &gv) in d.iter_mut().zip(gs) {
            *dv = coef * (two * gv * den - num) / (den * den);
        }
    }
    dp
}
