//! Network definition: configuration, parameters, shape enumeration and the
//! forward graph.

pub mod config;
pub mod network;
pub mod params;
pub mod shapes;

use serde::{Deserialize, Serialize};

pub use config::ArchConfig;
pub use network::{binary_head, forward, forward_traced, predict, Network, ParamVars, StageOutput, Trace};
pub use params::{build, is_encoder_param, ParamStore};

/// Output layer variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    /// 1x1 convolution to `num_classes` channels and channel softmax.
    Semantic,
    /// 1x1 convolution to one channel and sigmoid.
    Binary,
}
