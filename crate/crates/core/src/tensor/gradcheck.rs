use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Settings for a central-difference gradient check.
#[derive(Debug, Clone)]
pub struct GradCheck {
    pub eps: f64,
    /// Add uniform noise of this amplitude to every input before checking, so
    /// tied maxima and relu kinks are moved off nondifferentiable points.
    pub jitter: Option<f64>,
    /// Check at most this many coordinates per input (chosen by `seed`).
    pub max_coords: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheck {
    fn default() -> Self {
        Self { eps: 1e-5, jitter: None, max_coords: None, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Input and flat coordinate where the maximum was attained.
    pub worst: (usize, usize),
    pub coords_checked: usize,
}

/// Compare reverse-mode gradients of the scalar program `f` against central
/// differences for every input with `requires_grad` set.
///
/// Error per coordinate is `|analytic - numeric| / max(1, |analytic|, |numeric|)`.
pub fn grad_check<F>(inputs: &[Tensor<f64>], cfg: &GradCheck, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut inputs: Vec<Tensor<f64>> = inputs.to_vec();
    if let Some(amp) = cfg.jitter {
        for t in &mut inputs {
            for v in t.data_mut() {
                *v += rng.random_range(-amp..amp);
            }
        }
    }

    let eval = |ins: &[Tensor<f64>], with_grad: bool| -> Result<(f64, Vec<Option<Vec<f64>>>)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ins.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        tape.check_finite()?;
        let loss = tape.value(out).item()?;
        let mut grads = Vec::new();
        if with_grad {
            tape.backward(out)?;
            grads = vars.iter().map(|&v| tape.grad(v).map(<[f64]>::to_vec)).collect();
        }
        Ok((loss, grads))
    };

    let (_, analytic) = eval(&inputs, true)?;
    let mut report = GradCheckReport { max_rel_error: 0.0, worst: (0, 0), coords_checked: 0 };
    for i in 0..inputs.len() {
        if !inputs[i].requires_grad() {
            continue;
        }
        let n = inputs[i].numel();
        let coords: Vec<usize> = match cfg.max_coords {
            Some(m) if m < n => {
                let mut c = sample(&mut rng, n, m).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..n).collect(),
        };
        for j in coords {
            let a = analytic[i].as_ref().map_or(0.0, |g| g[j]);
            let orig = inputs[i].data()[j];
            inputs[i].data_mut()[j] = orig + cfg.eps;
            let (lp, _) = eval(&inputs, false)?;
            inputs[i].data_mut()[j] = orig - cfg.eps;
            let (lm, _) = eval(&inputs, false)?;
            inputs[i].data_mut()[j] = orig;
            let numeric = (lp - lm) / (2.0 * cfg.eps);
            let err = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            if !err.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "non-finite gradient comparison at input {i}, coordinate {j}"
                )));
            }
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = (i, j);
            }
            report.coords_checked += 1;
        }
    }
    Ok(report)
}
