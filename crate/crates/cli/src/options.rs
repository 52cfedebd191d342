use std::path::PathBuf;

use a2dmn::data::{AugmentConfig, PhantomParams};
use a2dmn::train::TrainConfig;
use anyhow::{bail, Result};
use clap::Args;

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Number of phantoms.
    #[arg(long, default_value_t = 325)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory; receives images/, masks/ and manifest.csv.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = PhantomParams::default().width)]
    pub width: usize,
    #[arg(long, default_value_t = PhantomParams::default().height)]
    pub height: usize,
    /// Probability that a phantom contains a tumor.
    #[arg(long, default_value_t = PhantomParams::default().tumor_probability)]
    pub tumor_probability: f64,
}

/// Flags shared by pretraining and training. Unset flags keep the full-size
/// settings, or the desk preset with `--desk`.
#[derive(Debug, Args)]
pub struct CommonTrainArgs {
    /// Dataset directory written by gen-data.
    #[arg(long)]
    pub data: PathBuf,
    /// 64x64 images, 1/8 channels, batch 4, learning rate 5e-3.
    #[arg(long)]
    pub desk: bool,
    #[arg(long)]
    pub image_size: Option<usize>,
    /// Channel multiplier.
    #[arg(long)]
    pub scale: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub val_frac: Option<f64>,
    /// Train on the preprocessed images without rotation/flip/shift.
    #[arg(long)]
    pub no_augment: bool,
}

impl CommonTrainArgs {
    pub fn config(&self) -> Result<TrainConfig> {
        let mut cfg = if self.desk { TrainConfig::desk() } else { TrainConfig::default() };
        if let Some(s) = self.image_size {
            cfg.arch.image_size = s;
        }
        if let Some(s) = self.scale {
            cfg.arch.channel_scale = s;
        }
        if let Some(e) = self.epochs {
            cfg.epochs = e;
        }
        if let Some(b) = self.batch_size {
            cfg.batch_size = b;
        }
        if let Some(lr) = self.lr {
            cfg.adam.learning_rate = lr;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(v) = self.val_frac {
            cfg.val_frac = v;
        }
        cfg.augment = if self.no_augment { None } else { Some(AugmentConfig { seed: cfg.seed, ..AugmentConfig::default() }) };
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[command(flatten)]
    pub common: CommonTrainArgs,
    /// Checkpoint path (.a2dm; a .json sidecar is written next to it).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonTrainArgs,
    /// Output directory for fold checkpoints, histories and the split.
    #[arg(long)]
    pub out: PathBuf,
    /// Disable the smoothness term (lambda = 0).
    #[arg(long)]
    pub no_smoothness: bool,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub sigma_alpha: Option<f64>,
    #[arg(long)]
    pub sigma_beta: Option<f64>,
    /// Initialise the encoder from a pretraining checkpoint.
    #[arg(long)]
    pub init_encoder: Option<PathBuf>,
    /// Number of cross-validation folds.
    #[arg(long)]
    pub folds: Option<usize>,
    /// Train only this fold (1-based); may be repeated.
    #[arg(long)]
    pub fold: Vec<usize>,
}

impl TrainArgs {
    pub fn config(&self) -> Result<TrainConfig> {
        let mut cfg = self.common.config()?;
        cfg.smoothness_enabled = !self.no_smoothness;
        if let Some(l) = self.lambda {
            cfg.loss.lambda = l;
        }
        if let Some(s) = self.sigma_alpha {
            cfg.loss.sigma_alpha = s;
        }
        if let Some(s) = self.sigma_beta {
            cfg.loss.sigma_beta = s;
        }
        if let Some(k) = self.folds {
            cfg.k_folds = k;
        }
        if let Some(&bad) = self.fold.iter().find(|&&f| f == 0 || f > cfg.k_folds) {
            bail!("--fold {bad} outside 1..={}", cfg.k_folds);
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Dataset directory written by gen-data.
    #[arg(long)]
    pub data: PathBuf,
    /// Directory written by `train`; its fold checkpoints are evaluated.
    #[arg(long, conflicts_with = "pred", required_unless_present = "pred")]
    pub models: Option<PathBuf>,
    /// Directory of predicted mask PGMs named <id>.pgm, compared as-is.
    #[arg(long)]
    pub pred: Option<PathBuf>,
    /// Folds and split seed for --pred (ignored with --models).
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SuiteArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
