//! Dilated multiscale encoder-decoder segmentation of layered-tissue
//! ultrasound images.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`]: NCHW tensors and a reverse-mode tape with the handful of
//!   operations the network needs, plus a finite-difference checker.
//! * [`model`]: configuration, parameter store, forward graph and the
//!   checkpoint file format.
//! * [`losses`]: soft Dice, softargmax and the pairwise smoothness loss.
//! * [`metrics`]: per-class IoU, Hausdorff distance and average boundary
//!   distance.
//! * [`data`]: synthetic phantoms, preprocessing, augmentation, fold splits
//!   and PGM datasets.
//! * [`train`]: Adam, training loops, encoder transfer and fold evaluation.
//! * [`verify`]: the gradient and oracle suites run by the CLI.

pub mod classes;
pub mod data;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod par;
pub mod tensor;
pub mod train;
pub mod verify;

pub use classes::{ClassOrder, TissueClass, NUM_CLASSES};
pub use error::{Error, Result};
pub use tensor::{Precision, Real, Tape, Tensor, Var};
