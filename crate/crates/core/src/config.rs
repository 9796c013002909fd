//! Run configuration: one TOML document with a table per component.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::DataConfig;
use crate::error::{Error, Result};
use crate::model::{DiscriminatorConfig, GeneratorConfig};
use crate::train::TrainConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Profile {
    /// Full-size network and hyperparameters.
    Paper,
    /// Three-level network on 1024-sample segments, sized for the fixture
    /// corpus and a CPU.
    Desk,
}

impl FromStr for Profile {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Profile::Paper),
            "desk" => Ok(Profile::Desk),
            _ => Err(Error::InvalidConfig(format!(
                "unknown profile `{s}` (expected paper or desk)"
            ))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
}

impl RunConfig {
    pub fn profile(p: Profile) -> Self {
        match p {
            Profile::Paper => RunConfig::default(),
            Profile::Desk => {
                let generator = GeneratorConfig::desk();
                RunConfig {
                    train: TrainConfig {
                        batch_size: 8,
                        segment_length: generator.input_length,
                        epochs: 25,
                        lr: 1e-3,
                        checkpoint_every: 5,
                        ..Default::default()
                    },
                    data: DataConfig {
                        split: [8, 2, 2],
                        train_noises: vec!["noise_00".into(), "noise_01".into()],
                        section_seconds: 6.0,
                        ..Default::default()
                    },
                    generator,
                    discriminator: DiscriminatorConfig::default(),
                }
            }
        }
    }

    /// Parses a full or partial document; missing keys take the values of
    /// `base`.
    pub fn from_toml(text: &str, base: &RunConfig) -> Result<Self> {
        let doc: toml::Table = text
            .parse()
            .map_err(|e| Error::InvalidConfig(format!("{e}")))?;
        let mut tree =
            toml::Table::try_from(base).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        merge(&mut tree, doc);
        let cfg: RunConfig = tree
            .try_into()
            .map_err(|e: toml::de::Error| Error::InvalidConfig(e.to_string()))?;
        Ok(cfg)
    }

    /// Applies `section.key=value` overrides, where the value is a TOML
    /// literal. A bare string that does not parse as TOML is taken as a
    /// string.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        let mut tree =
            toml::Table::try_from(self).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        for o in overrides {
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("override `{o}` is not key=value")))?;
            let value = parse_value(raw.trim());
            let path: Vec<&str> = key.trim().split('.').collect();
            let (last, parents) = path.split_last().expect("split yields at least one part");
            let mut node = &mut tree;
            for p in parents {
                node = node
                    .get_mut(*p)
                    .and_then(toml::Value::as_table_mut)
                    .ok_or_else(|| {
                        Error::InvalidConfig(format!("unknown config section `{p}` in `{key}`"))
                    })?;
            }
            if !node.contains_key(*last) {
                return Err(Error::InvalidConfig(format!("unknown config key `{key}`")));
            }
            node.insert(last.to_string(), value);
        }
        tree.try_into()
            .map_err(|e: toml::de::Error| Error::InvalidConfig(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.discriminator.validate()?;
        self.train.validate()?;
        self.data.validate()?;
        if self.train.segment_length != self.generator.input_length {
            return Err(Error::InvalidConfig(format!(
                "train.segment_length {} differs from generator.input_length {}",
                self.train.segment_length, self.generator.input_length
            )));
        }
        Ok(())
    }
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn merge(into: &mut toml::Table, from: toml::Table) {
    for (k, v) in from {
        match (into.get_mut(&k), v) {
            (Some(toml::Value::Table(dst)), toml::Value::Table(src)) => merge(dst, src),
            (_, v) => {
                into.insert(k, v);
            }
        }
    }
}
