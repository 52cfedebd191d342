//! Optimisation, training loops, encoder transfer, checkpoints and
//! cross-validated evaluation.

mod adam;
mod checkpoint;
mod config;
mod folds;
mod run;

pub use adam::{adam_step, AdamConfig, AdamState, Gradients};
pub use checkpoint::{sidecar_path, Checkpoint, CheckpointMeta};
pub use config::{TrainConfig, TrainMode};
pub use folds::{
    evaluate_folds, fold_checkpoint_path, load_fold_checkpoints, predict_mask, select, FoldReport, FoldRow,
};
pub use run::{dataset_loss, make_batch, prepare, pretrain_binary, train, transfer_encoder, EpochRecord, TrainResult};
