use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{adam_step, AdamState, Checkpoint, CheckpointMeta, Gradients, TrainConfig, TrainMode};
use crate::data::{augment, normalize, preprocess, Sample};
use crate::error::{Error, Result};
use crate::losses::{total_loss, LossConfig};
use crate::model::{build, Head, Network, ParamStore, ParamVars};
use crate::tensor::{Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-sample training loss over the epoch.
    pub train_loss: f64,
    /// Loss on the validation set after the epoch, if there is one.
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    /// Parameters with the lowest selection loss.
    pub best: Checkpoint,
    /// Parameters after the final epoch.
    pub last: ParamStore<f32>,
    pub history: Vec<EpochRecord>,
}

impl TrainResult {
    /// Loss used for model selection at each epoch: validation loss, or the
    /// training loss when no validation set was given.
    pub fn selection_losses(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.val_loss.unwrap_or(r.train_loss)).collect()
    }
}

/// Stack samples into `[N, 1, S, S]` images and `[N, C, S, S]` targets.
/// Binary mode uses two target channels: foreground then background.
pub fn make_batch(samples: &[&Sample], mode: TrainMode) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let mut images = Vec::with_capacity(samples.len());
    let mut targets = Vec::with_capacity(samples.len());
    for s in samples {
        let (img, onehot) = normalize::<f32>(s);
        let (h, w) = (s.height(), s.width());
        images.push(Tensor::new(&[1, 1, h, w], img.into_data())?);
        let target = match mode {
            TrainMode::Semantic => Tensor::new(&[1, onehot.shape()[0], h, w], onehot.into_data())?,
            TrainMode::BinaryPretrain => {
                s.check_binary()?;
                let fg = s.mask().iter().map(|&l| (l == 1) as u8 as f32);
                let bg = s.mask().iter().map(|&l| (l == 0) as u8 as f32);
                Tensor::new(&[1, 2, h, w], fg.chain(bg).collect())?
            }
        };
        targets.push(target);
    }
    Ok((Tensor::stack_batch(&images)?, Tensor::stack_batch(&targets)?))
}

/// Forward pass and objective on one batch. Returns the loss handle.
fn batch_loss(
    tape: &mut Tape<f32>,
    params: &ParamVars,
    cfg: &TrainConfig,
    loss: &LossConfig,
    images: Tensor<f32>,
    targets: Tensor<f32>,
) -> Result<Var> {
    let x = tape.constant(images);
    let g = tape.constant(targets);
    let head = cfg.mode.head();
    let out = Network { cfg: &cfg.arch, tape: &mut *tape, params, trace: None }.forward(x, head)?;
    match head {
        Head::Semantic => Ok(total_loss(tape, out, g, x, loss)?.total),
        Head::Binary => {
            let neg = tape.scale(out, -1.0);
            let background = tape.shift(neg, 1.0);
            let probs = tape.concat_channels(out, background)?;
            tape.dice_loss(probs, g, loss.dice_smooth)
        }
    }
}

/// Mean per-sample loss over `samples` with constant parameters.
pub fn dataset_loss(cfg: &TrainConfig, params: &ParamStore<f32>, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("loss over an empty set".into()));
    }
    let loss_cfg = cfg.effective_loss();
    let mut total = 0.0;
    for chunk in samples.chunks(cfg.batch_size) {
        let refs: Vec<&Sample> = chunk.iter().collect();
        let (images, targets) = make_batch(&refs, cfg.mode)?;
        let mut tape = Tape::new();
        let pv = ParamVars::register(&mut tape, params, false);
        let l = batch_loss(&mut tape, &pv, cfg, &loss_cfg, images, targets)?;
        total += tape.value(l).item()? as f64 * chunk.len() as f64;
    }
    Ok(total / samples.len() as f64)
}

/// Pad, resize and (binary mode) validate every sample.
pub fn prepare(cfg: &TrainConfig, samples: &[Sample]) -> Result<Vec<Sample>> {
    samples
        .iter()
        .map(|s| {
            let p = preprocess(s, cfg.arch.image_size, &cfg.loss.class_order)?;
            if cfg.mode == TrainMode::BinaryPretrain {
                p.check_binary()?;
            }
            Ok(p)
        })
        .collect()
}

/// Mini-batch Adam training with per-epoch seeded shuffling and best-model
/// retention.
///
/// `init` replaces the seeded initialisation (used for encoder transfer).
/// When `save_to` is given the best checkpoint is written there every time
/// it improves.
pub fn train(
    cfg: &TrainConfig,
    train_set: &[Sample],
    val_set: &[Sample],
    init: Option<ParamStore<f32>>,
    save_to: Option<&Path>,
) -> Result<TrainResult> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    let head = cfg.mode.head();
    let mut params = match init {
        Some(p) => {
            p.check_layout(&cfg.arch, head)?;
            p
        }
        None => build(&cfg.arch, head, cfg.seed)?,
    };
    let train_set = prepare(cfg, train_set)?;
    let val_set = prepare(cfg, val_set)?;
    let loss_cfg = cfg.effective_loss();
    let order = cfg.loss.class_order;

    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = AdamState::new();
    let mut step = 0u64;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<Checkpoint> = None;

    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(master.random());
        let mut idx: Vec<usize> = (0..train_set.len()).collect();
        idx.shuffle(&mut rng);
        let mut sum = 0.0;
        for (batch, chunk) in idx.chunks(cfg.batch_size).enumerate() {
            let augmented: Vec<Sample> = match &cfg.augment {
                Some(a) => chunk
                    .iter()
                    .map(|&i| augment(&train_set[i], a, &order, &mut rng))
                    .collect::<Result<_>>()?,
                None => chunk.iter().map(|&i| train_set[i].clone()).collect(),
            };
            let refs: Vec<&Sample> = augmented.iter().collect();
            let (images, targets) = make_batch(&refs, cfg.mode)?;

            let mut tape = Tape::new();
            let pv = ParamVars::register(&mut tape, &params, true);
            let loss = batch_loss(&mut tape, &pv, cfg, &loss_cfg, images, targets)?;
            let value = tape.value(loss).item()? as f64;
            if !value.is_finite() {
                return Err(Error::NanLoss { epoch, batch });
            }
            sum += value * chunk.len() as f64;
            tape.backward(loss)?;
            let grads: Gradients<f32> = pv
                .iter()
                .filter_map(|(name, v)| tape.grad(v).map(|g| (name.to_string(), g.to_vec())))
                .collect::<HashMap<_, _>>();
            step += 1;
            adam_step(&mut params, &grads, &mut state, step, &cfg.adam)?;
        }
        let train_loss = sum / train_set.len() as f64;
        let val_loss = if val_set.is_empty() { None } else { Some(dataset_loss(cfg, &params, &val_set)?) };
        if let Some(v) = val_loss.filter(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("validation loss {v} at epoch {epoch}")));
        }
        history.push(EpochRecord { epoch, train_loss, val_loss });

        let selection = val_loss.unwrap_or(train_loss);
        if best.as_ref().is_none_or(|b| selection < b.meta.best_val_loss) {
            let ck = Checkpoint {
                params: params.clone(),
                meta: CheckpointMeta { config: cfg.clone(), epoch, best_val_loss: selection },
            };
            if let Some(path) = save_to {
                ck.save(path)?;
            }
            best = Some(ck);
        }
    }
    Ok(TrainResult { best: best.expect("at least one epoch"), last: params, history })
}

/// Train the binary-head variant on tumor-versus-rest masks with Dice only.
pub fn pretrain_binary(
    cfg: &TrainConfig,
    train_set: &[Sample],
    val_set: &[Sample],
    save_to: Option<&Path>,
) -> Result<TrainResult> {
    for s in train_set.iter().chain(val_set) {
        s.check_binary()?;
    }
    let cfg = TrainConfig { mode: TrainMode::BinaryPretrain, smoothness_enabled: false, ..cfg.clone() };
    train(&cfg, train_set, val_set, None, save_to)
}

/// Fresh seeded semantic parameters with the encoder copied from `pretrained`.
pub fn transfer_encoder(cfg: &TrainConfig, pretrained: &ParamStore<f32>) -> Result<ParamStore<f32>> {
    let mut params = build(&cfg.arch, Head::Semantic, cfg.seed)?;
    params.load_encoder(&pretrained.encoder_subset())?;
    Ok(params)
}
