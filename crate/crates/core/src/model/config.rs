use serde::{Deserialize, Serialize};

use crate::classes::NUM_CLASSES;
use crate::error::{Error, Result};

/// Layer widths, kernel extents and dilations of the network.
///
/// Stages and blocks are zero-indexed here: `basic_channels[0]` is encoder
/// stage 1, `dme_channels[3]` is the fourth DME block, `up_widths[0]` is the
/// first (deepest) up block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub image_size: usize,
    pub num_classes: usize,
    /// Kernels in both 3x3 convolutions of each encoder stage.
    pub basic_channels: [usize; 5],
    /// Dilation of the first and second dilated branch of every DME block.
    pub dilation_1: usize,
    pub dilation_2: usize,
    /// Extent of the large undilated third branch per DME block.
    pub large_kernel_sizes: [usize; 4],
    /// Branch and projection width per DME block.
    pub dme_channels: [usize; 4],
    /// Extent of the convolution producing each DME skip feature. The fifth
    /// entry is carried for completeness and never read.
    pub skip_kernel_sizes: [usize; 5],
    /// Kernel extents `[M1, M2, M3]` per up block.
    pub up_kernels: [[usize; 3]; 4],
    /// Uniform width of the three convolutions (and upsampling) per up block.
    pub up_widths: [usize; 4],
    /// Multiplier applied to every channel count; 1 reproduces full size.
    pub channel_scale: f64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            image_size: 256,
            num_classes: NUM_CLASSES,
            basic_channels: [32, 64, 128, 256, 512],
            dilation_1: 2,
            dilation_2: 4,
            large_kernel_sizes: [15, 13, 11, 9],
            dme_channels: [32, 64, 128, 256],
            skip_kernel_sizes: [1, 5, 1, 1, 5],
            up_kernels: [[3, 1, 3], [3, 1, 3], [3, 1, 3], [3, 5, 3]],
            up_widths: [256, 128, 64, 32],
            channel_scale: 1.0,
        }
    }
}

impl ArchConfig {
    /// 64x64 inputs with one eighth of the channels.
    pub fn desk() -> Self {
        Self { image_size: 64, channel_scale: 0.125, ..Self::default() }
    }

    pub fn with_scale(mut self, image_size: usize, channel_scale: f64) -> Self {
        self.image_size = image_size;
        self.channel_scale = channel_scale;
        self
    }

    pub fn scaled(&self, c: usize) -> usize {
        (c as f64 * self.channel_scale).round() as usize
    }

    pub fn basic(&self, stage: usize) -> usize {
        self.scaled(self.basic_channels[stage])
    }

    pub fn dme(&self, block: usize) -> usize {
        self.scaled(self.dme_channels[block])
    }

    pub fn up(&self, block: usize) -> usize {
        self.scaled(self.up_widths[block])
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &'static str, reason: String| Err(Error::Config { field, reason });
        if self.image_size == 0 || !self.image_size.is_multiple_of(16) {
            return bad("image_size", format!("{} is not a positive multiple of 16", self.image_size));
        }
        if self.num_classes < 2 {
            return bad("num_classes", format!("need at least 2, got {}", self.num_classes));
        }
        if !self.channel_scale.is_finite() || self.channel_scale <= 0.0 {
            return bad("channel_scale", format!("must be positive, got {}", self.channel_scale));
        }
        let widths = self
            .basic_channels
            .iter()
            .chain(&self.dme_channels)
            .chain(&self.up_widths);
        if let Some(&c) = widths.clone().find(|&&c| self.scaled(c) == 0) {
            return bad(
                "channel_scale",
                format!("scale {} reduces a {c}-channel layer to zero", self.channel_scale),
            );
        }
        if self.dilation_1 == 0 || self.dilation_2 == 0 {
            return bad("dilation", "dilations must be positive".into());
        }
        let kernels = self
            .large_kernel_sizes
            .iter()
            .chain(&self.skip_kernel_sizes[..4])
            .chain(self.up_kernels.iter().flatten());
        if let Some(k) = kernels.clone().find(|&&k| k % 2 == 0) {
            return bad("kernel size", format!("{k} is not odd"));
        }
        Ok(())
    }
}
