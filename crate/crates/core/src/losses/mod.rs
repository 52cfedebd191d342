//! Training objectives: soft Dice, the softargmax label relaxation and the
//! anatomy-aware pairwise smoothness loss.

pub mod dice;
pub mod oracle;
pub mod smoothness;
pub mod softargmax;

use serde::{Deserialize, Serialize};

use crate::classes::ClassOrder;
use crate::error::{Error, Result};
use crate::tensor::{Real, Tape, Tensor, Var};

pub use smoothness::{pair_weight, NeighborWeighting, NEIGHBORS};

/// Hyperparameters of the combined objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Weight of the smoothness term.
    pub lambda: f64,
    pub sigma_alpha: f64,
    pub sigma_beta: f64,
    pub epsilon: f64,
    pub beta_softargmax: f64,
    pub dice_smooth: f64,
    pub class_order: ClassOrder,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda: 5e-5,
            sigma_alpha: 0.1,
            sigma_beta: 5.0,
            epsilon: 1e-7,
            beta_softargmax: 1e10,
            dice_smooth: 1.0,
            class_order: ClassOrder::default(),
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("lambda", self.lambda),
            ("sigma_alpha", self.sigma_alpha),
            ("sigma_beta", self.sigma_beta),
            ("epsilon", self.epsilon),
            ("beta_softargmax", self.beta_softargmax),
            ("dice_smooth", self.dice_smooth),
        ];
        for (field, v) in fields {
            // lambda = 0 switches the smoothness term off
            let ok = if field == "lambda" { v >= 0.0 } else { v > 0.0 };
            if !ok || !v.is_finite() {
                return Err(Error::Config { field, reason: format!("must be positive, got {v}") });
            }
        }
        self.class_order.validate()
    }

    pub fn smoothness_params(&self) -> SmoothnessParams {
        SmoothnessParams {
            sigma_alpha: self.sigma_alpha,
            sigma_beta: self.sigma_beta,
            epsilon: self.epsilon,
        }
    }
}

/// The subset of [`LossConfig`] the smoothness term reads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessParams {
    pub sigma_alpha: f64,
    pub sigma_beta: f64,
    pub epsilon: f64,
}

impl Default for SmoothnessParams {
    fn default() -> Self {
        LossConfig::default().smoothness_params()
    }
}

/// Tape handles of the pieces of the combined objective.
#[derive(Debug, Clone, Copy)]
pub struct TotalLoss {
    pub total: Var,
    pub dice: Var,
    pub smoothness: Option<Var>,
}

/// Per-pixel argmax over channels of an NCHW tensor; ties go to the lowest
/// channel.
pub fn hard_labels<T: Real>(probs: &Tensor<T>) -> Result<Vec<u8>> {
    let (n, k, h, w) = probs.dims4("hard_labels")?;
    let plane = h * w;
    let d = probs.data();
    let mut out = Vec::with_capacity(n * plane);
    for b in 0..n {
        for p in 0..plane {
            let mut best = 0;
            for c in 1..k {
                if d[(b * k + c) * plane + p] > d[(b * k + best) * plane + p] {
                    best = c;
                }
            }
            out.push(best as u8);
        }
    }
    Ok(out)
}

/// `dice + lambda * smoothness(softargmax(probs), argmax(probs), image)`.
///
/// The smoothness term is skipped entirely when `lambda == 0`.
pub fn total_loss<T: Real>(
    tape: &mut Tape<T>,
    probs: Var,
    target: Var,
    image: Var,
    cfg: &LossConfig,
) -> Result<TotalLoss> {
    let dice = tape.dice_loss(probs, target, cfg.dice_smooth)?;
    if cfg.lambda == 0.0 {
        return Ok(TotalLoss { total: dice, dice, smoothness: None });
    }
    let v = tape.softargmax(probs, cfg.beta_softargmax)?;
    let labels = hard_labels(tape.value(probs))?;
    let sl = tape.smoothness_loss(v, &labels, image, cfg.smoothness_params())?;
    let weighted = tape.scale(sl, cfg.lambda);
    let total = tape.add(dice, weighted)?;
    Ok(TotalLoss { total, dice, smoothness: Some(sl) })
}
