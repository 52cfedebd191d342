use serde::{Deserialize, Serialize};

use super::AdamConfig;
use crate::data::AugmentConfig;
use crate::error::{Error, Result};
use crate::losses::LossConfig;
use crate::model::{ArchConfig, Head};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    Semantic,
    BinaryPretrain,
}

impl TrainMode {
    pub fn head(self) -> Head {
        match self {
            TrainMode::Semantic => Head::Semantic,
            TrainMode::BinaryPretrain => Head::Binary,
        }
    }
}

/// Everything that determines a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub k_folds: usize,
    pub val_frac: f64,
    pub seed: u64,
    pub arch: ArchConfig,
    pub loss: LossConfig,
    pub mode: TrainMode,
    pub smoothness_enabled: bool,
    pub adam: AdamConfig,
    /// Training-time augmentation; `None` trains on the preprocessed samples.
    pub augment: Option<AugmentConfig>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            epochs: 100,
            k_folds: 5,
            val_frac: 0.15,
            seed: 0,
            arch: ArchConfig::default(),
            loss: LossConfig::default(),
            mode: TrainMode::Semantic,
            smoothness_enabled: true,
            adam: AdamConfig::default(),
            augment: Some(AugmentConfig::default()),
        }
    }
}

impl TrainConfig {
    /// 64x64 images, one eighth of the channels, batches of four and a
    /// larger step size.
    pub fn desk() -> Self {
        TrainConfig {
            batch_size: 4,
            arch: ArchConfig::desk(),
            adam: AdamConfig { learning_rate: 5e-3, ..AdamConfig::default() },
            ..TrainConfig::default()
        }
    }

    /// Loss settings actually used: smoothness off or binary pretraining
    /// forces `lambda = 0`.
    pub fn effective_loss(&self) -> LossConfig {
        let mut l = self.loss;
        if !self.smoothness_enabled || self.mode == TrainMode::BinaryPretrain {
            l.lambda = 0.0;
        }
        l
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config { field: "batch_size", reason: "must be at least 1".into() });
        }
        if self.epochs == 0 {
            return Err(Error::Config { field: "epochs", reason: "must be at least 1".into() });
        }
        let a = &self.adam;
        if !(a.learning_rate >= 0.0 && a.learning_rate.is_finite()) {
            return Err(Error::Config { field: "learning_rate", reason: format!("{} is not >= 0", a.learning_rate) });
        }
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return Err(Error::Config { field: "adam", reason: "betas must be in [0, 1), eps > 0".into() });
        }
        self.arch.validate()?;
        self.loss.validate()
    }
}
