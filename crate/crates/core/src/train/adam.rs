use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParamStore;
use crate::tensor::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates, shaped like the parameters.
#[derive(Debug, Clone, Default)]
pub struct AdamState<T> {
    moments: HashMap<String, (Vec<T>, Vec<T>)>,
}

impl<T: Real> AdamState<T> {
    pub fn new() -> Self {
        AdamState { moments: HashMap::new() }
    }

    pub fn first_moment(&self, name: &str) -> Option<&[T]> {
        self.moments.get(name).map(|(m, _)| m.as_slice())
    }

    pub fn second_moment(&self, name: &str) -> Option<&[T]> {
        self.moments.get(name).map(|(_, v)| v.as_slice())
    }
}

/// Gradient buffers by parameter name.
pub type Gradients<T> = HashMap<String, Vec<T>>;

/// One bias-corrected Adam update at step `t` (1-based).
pub fn adam_step<T: Real>(
    params: &mut ParamStore<T>,
    grads: &Gradients<T>,
    state: &mut AdamState<T>,
    t: u64,
    cfg: &AdamConfig,
) -> Result<()> {
    if t == 0 {
        return Err(Error::InvalidArgument("adam step index starts at 1".into()));
    }
    for (name, p) in params.iter() {
        match grads.get(name) {
            None => return Err(Error::MissingGrad(name.to_string())),
            Some(g) if g.len() != p.numel() => {
                return Err(Error::InvalidArgument(format!(
                    "gradient for {name} has {} entries, parameter has {}",
                    g.len(),
                    p.numel()
                )))
            }
            Some(_) => {}
        }
    }
    let f = T::from_f64;
    let (b1, b2) = (f(cfg.beta1), f(cfg.beta2));
    let c1 = f(1.0 - cfg.beta1.powi(t as i32));
    let c2 = f(1.0 - cfg.beta2.powi(t as i32));
    let (lr, eps) = (f(cfg.learning_rate), f(cfg.eps));
    for (name, p) in params.iter_mut() {
        let g = &grads[name];
        let (m, v) = state
            .moments
            .entry(name.to_string())
            .or_insert_with(|| (vec![T::zero(); g.len()], vec![T::zero(); g.len()]));
        for (((pi, &gi), mi), vi) in p.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = b1 * *mi + (T::one() - b1) * gi;
            *vi = b2 * *vi + (T::one() - b2) * gi * gi;
            let mhat = *mi / c1;
            let vhat = *vi / c2;
            *pi = *pi - lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}
