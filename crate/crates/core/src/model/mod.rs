//! Generator and discriminator networks.

mod config;
mod discriminator;
mod generator;
mod params;

pub use config::{DiscriminatorConfig, GeneratorConfig};
pub use discriminator::{build_discriminator, Discriminator};
pub use generator::{build_generator, Generator};
pub use params::ModelParams;

use params::ConvBlock;

use crate::error::{Error, Result};
use crate::ops::{BnMode, RunningStats, BN_EPS, BN_MOMENTUM};
use crate::tensor::{Checkpoint, Graph, Scalar, Var};

/// conv → (BN) → leaky ReLU, or conv alone when `slope` is `None`.
pub(crate) fn apply_block<T: Scalar>(
    g: &mut Graph<T>,
    vars: &[Var],
    stats: &mut [RunningStats<T>],
    blk: &ConvBlock,
    x: Var,
    mode: BnMode,
    slope: Option<f64>,
) -> Result<Var> {
    let mut y = g.conv1d(x, vars[blk.weight], vars[blk.bias], blk.spec)?;
    if let Some((gamma, beta, s)) = blk.bn {
        y = g.batch_norm(
            y,
            vars[gamma],
            vars[beta],
            &mut stats[s],
            mode,
            BN_MOMENTUM,
            BN_EPS,
        )?;
    }
    match slope {
        Some(a) => g.leaky_relu(y, T::of(a)),
        None => Ok(y),
    }
}

/// Writes every field of `cfg` as `prefix.field` metadata.
pub(crate) fn write_config_meta<C: serde::Serialize>(ckpt: &mut Checkpoint, prefix: &str, cfg: &C) {
    if let Ok(toml::Value::Table(t)) = toml::Value::try_from(cfg) {
        for (k, v) in t {
            ckpt.set_meta(&format!("{prefix}.{k}"), v);
        }
    }
}

pub(crate) fn read_config_meta<C: serde::de::DeserializeOwned>(
    ckpt: &Checkpoint,
    prefix: &str,
) -> Result<C> {
    let mut doc = String::new();
    for (k, v) in &ckpt.meta {
        if let Some(field) = k.strip_prefix(prefix).and_then(|r| r.strip_prefix('.')) {
            doc.push_str(&format!("{field} = {v}\n"));
        }
    }
    if doc.is_empty() {
        return Err(Error::Checkpoint(format!(
            "no `{prefix}` configuration in checkpoint"
        )));
    }
    toml::from_str(&doc)
        .map_err(|e| Error::Checkpoint(format!("{prefix} configuration: {}", e.message())))
}
