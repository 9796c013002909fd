//! Alternating adversarial training of the generator and discriminator.

mod loss;
mod run;
mod segment;
mod state;

use serde::{Deserialize, Serialize};

pub use loss::{loss_discriminator, loss_generator, GeneratorLoss};
pub use run::{train, write_loss_csv, RunOptions, TrainPair, CONFIG_SNAPSHOT, LOSS_CSV};
pub use segment::{sample_segments, Segment};
pub use state::{EpochLosses, StepLosses, TrainState};

use crate::error::{Error, Result};
use crate::tensor::AdamConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Weight of the reconstruction term in the generator objective.
    pub lambda_mse: f64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub segment_length: usize,
    /// Total epochs; training resumes from the state's current epoch.
    pub epochs: usize,
    pub seed: u64,
    pub d_steps_per_g_step: usize,
    /// Probabilities are clamped to `[eps, 1 − eps]` before any log.
    pub logit_clamp_eps: f64,
    /// Write `ckpt-{epoch}` every this many epochs (0 disables periodic saves).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda_mse: 20.0,
            lr: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 150,
            segment_length: 16384,
            epochs: 900,
            seed: 0,
            d_steps_per_g_step: 1,
            logit_clamp_eps: 1e-7,
            checkpoint_every: 10,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidConfig(format!("train: {m}")));
        if !(self.lambda_mse >= 0.0) {
            return fail(format!(
                "lambda_mse {} must be non-negative",
                self.lambda_mse
            ));
        }
        if !(self.logit_clamp_eps > 0.0 && self.logit_clamp_eps < 0.5) {
            return fail(format!(
                "logit_clamp_eps {} outside (0, 0.5)",
                self.logit_clamp_eps
            ));
        }
        if !(self.lr >= 0.0)
            || !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
        {
            return fail("lr must be ≥ 0 and betas in [0, 1)".into());
        }
        if !(self.adam_eps > 0.0) {
            return fail("adam_eps must be positive".into());
        }
        if self.batch_size == 0 || self.segment_length == 0 || self.d_steps_per_g_step == 0 {
            return fail(
                "batch_size, segment_length and d_steps_per_g_step must be positive".into(),
            );
        }
        Ok(())
    }
}
