use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    /// Number of downsampling (and upsampling) levels.
    pub levels: usize,
    /// Channels of the first DS level.
    pub base_channels: usize,
    /// Channel increment per DS level.
    pub channel_step: usize,
    pub ds_kernel: usize,
    pub us_kernel: usize,
    pub bottleneck_kernel: usize,
    pub bottleneck_dilations: Vec<usize>,
    pub leaky_slope: f64,
    /// Training segment length; must be divisible by `2^levels`.
    pub input_length: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            levels: 8,
            base_channels: 24,
            channel_step: 24,
            ds_kernel: 15,
            us_kernel: 5,
            bottleneck_kernel: 3,
            bottleneck_dilations: vec![1, 2, 4],
            leaky_slope: 0.1,
            input_length: 16384,
        }
    }
}

impl GeneratorConfig {
    pub fn desk() -> Self {
        GeneratorConfig {
            levels: 3,
            input_length: 1024,
            ..Default::default()
        }
    }

    /// Output channels of each DS level, shallowest first.
    pub fn channel_schedule(&self) -> Vec<usize> {
        (0..self.levels)
            .map(|i| self.base_channels + i * self.channel_step)
            .collect()
    }

    /// Time extent at the bottleneck for an input of `len` samples.
    pub fn bottleneck_len(&self, len: usize) -> usize {
        len >> self.levels
    }

    pub fn length_multiple(&self) -> usize {
        1usize << self.levels
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidConfig(format!("generator: {m}")));
        if self.levels == 0 {
            return fail("levels must be at least 1".into());
        }
        if self.levels > 20 {
            return fail(format!("levels = {} is unreasonably deep", self.levels));
        }
        if self.base_channels == 0 || self.channel_step == 0 {
            return fail("channel schedule must start positive and strictly increase".into());
        }
        if self.ds_kernel == 0 || self.us_kernel == 0 || self.bottleneck_kernel == 0 {
            return fail("kernel sizes must be positive".into());
        }
        if self.input_length == 0 || !self.input_length.is_multiple_of(self.length_multiple()) {
            return fail(format!(
                "input_length {} not divisible by 2^levels = {}",
                self.input_length,
                self.length_multiple()
            ));
        }
        let d = &self.bottleneck_dilations;
        if d.is_empty()
            || !d.iter().all(|r| r.is_power_of_two())
            || !d.windows(2).all(|w| w[0] < w[1])
        {
            return fail(format!(
                "bottleneck_dilations {d:?} must be strictly increasing powers of two"
            ));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return fail(format!("leaky_slope {} outside (0, 1)", self.leaky_slope));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscriminatorConfig {
    pub blocks: usize,
    /// Output channels of each block.
    pub channels: Vec<usize>,
    pub kernel: usize,
    pub stride: usize,
    pub leaky_slope: f64,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        DiscriminatorConfig {
            blocks: 3,
            channels: vec![32, 64, 128],
            kernel: 15,
            stride: 4,
            leaky_slope: 0.1,
        }
    }
}

impl DiscriminatorConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidConfig(format!("discriminator: {m}")));
        if self.blocks == 0 || self.channels.len() != self.blocks {
            return fail(format!(
                "{} blocks but {} channel entries",
                self.blocks,
                self.channels.len()
            ));
        }
        if self.channels[0] == 0 || !self.channels.windows(2).all(|w| w[0] < w[1]) {
            return fail(format!(
                "channels {:?} must be positive and increasing",
                self.channels
            ));
        }
        if self.kernel == 0 || self.stride == 0 {
            return fail("kernel and stride must be positive".into());
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return fail(format!("leaky_slope {} outside (0, 1)", self.leaky_slope));
        }
        Ok(())
    }
}
