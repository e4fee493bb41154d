use std::path::Path;

use serde::{Deserialize, Serialize};

use super::eval::EvalConfig;
use crate::distill::DistillConfig;
use crate::error::{Error, Result};
use crate::refgen::TrajOptConfig;
use crate::rl::TrainConfig;
use crate::sim::{RobotModel, SimConfig};

pub const SCHEMA_VERSION: u32 = 1;

/// Every setting of a run. Missing tables and keys take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub model: RobotModel,
    pub sim: SimConfig,
    pub refgen: TrajOptConfig,
    pub train: TrainConfig,
    pub distill: DistillConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            model: RobotModel::default(),
            sim: SimConfig::default(),
            refgen: TrajOptConfig::default(),
            train: TrainConfig::default(),
            distill: DistillConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.train.validate()?;
        self.distill.validate()?;
        self.eval.validate()
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Write the fully resolved configuration to `dir/config.snapshot.toml`.
    pub fn snapshot(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("config.snapshot.toml"), self.to_toml()?)?;
        Ok(())
    }
}
