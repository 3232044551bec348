//! TOML run configuration shared by the CLI subcommands.
//!
//! Every section is optional; missing keys take their defaults.
//!
//! ```toml
//! seed = 7
//!
//! [env]
//! n_sheep = 1
//! max_steps = 1000
//!
//! [env.env]
//! kind = "empty"
//! size = 270.0
//!
//! [train]
//! total_frames = 200000
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dqn::TrainConfig;
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::eval::SweepSpec;
use crate::policy::{PolicyKind, RuleParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub policy: PolicyKind,
    pub episodes: u64,
    /// Weights for the learned policy.
    pub checkpoint: Option<PathBuf>,
    /// Exploration rate for the learned policy during evaluation.
    pub epsilon: f64,
    pub rule: RuleParams,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            policy: PolicyKind::SimpleRule,
            episodes: 100,
            checkpoint: None,
            epsilon: 0.0,
            rule: RuleParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub seed: u64,
    pub env: EnvConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub sweep: SweepSpec,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Propagates a top-level seed into the sections that carry their own.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.train.seed = seed;
        self.sweep.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.train.validate()?;
        self.sweep.env.validate()?;
        if self.sweep.runs_per_level == 0 || self.sweep.levels == 0 {
            return Err(Error::Config("sweep needs levels >= 1 and runs_per_level >= 1".into()));
        }
        Ok(())
    }
}
