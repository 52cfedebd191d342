use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One cross-validation fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub test: Vec<String>,
    pub train: Vec<String>,
    pub val: Vec<String>,
}

/// Shuffle once, cut into `k` test folds (sizes differ by at most one), and
/// hold out `round(val_frac * rest)` of each remainder for validation.
pub fn kfold_split(ids: &[String], k: usize, val_frac: f64, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::Config { field: "k_folds", reason: format!("need at least 2 folds, got {k}") });
    }
    if ids.len() < k {
        return Err(Error::InvalidArgument(format!("{} ids cannot fill {k} folds", ids.len())));
    }
    if !(0.0..1.0).contains(&val_frac) {
        return Err(Error::Config { field: "val_frac", reason: format!("{val_frac} not in [0, 1)") });
    }
    let mut order = ids.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (order.len() / k, order.len() % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + (f < extra) as usize;
        let test = order[start..start + len].to_vec();
        let rest: Vec<String> = order[..start].iter().chain(&order[start + len..]).cloned().collect();
        let n_val = (val_frac * rest.len() as f64).round() as usize;
        let (train, val) = rest.split_at(rest.len() - n_val);
        folds.push(Fold { test, train: train.to_vec(), val: val.to_vec() });
        start += len;
    }
    Ok(folds)
}

/// Deterministic holdout: `round(val_frac * n)` shuffled ids go to validation.
pub fn train_val_split(ids: &[String], val_frac: f64, seed: u64) -> Result<(Vec<String>, Vec<String>)> {
    if !(0.0..1.0).contains(&val_frac) {
        return Err(Error::Config { field: "val_frac", reason: format!("{val_frac} not in [0, 1)") });
    }
    let mut order = ids.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = (val_frac * order.len() as f64).round() as usize;
    let val = order.split_off(order.len() - n_val);
    Ok((order, val))
}
