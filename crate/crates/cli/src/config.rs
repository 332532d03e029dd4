//! Configuration file handling.
//!
//! One TOML document with `[reward]`, `[optim]`, `[train]` and `[prior]`
//! sections. Missing keys fall back to built-in defaults, and command-line
//! flags are applied on top by the individual commands.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use verigate_core::optim::OptimConfig;
use verigate_core::reward::{LengthUnit, RewardConfig};
use verigate_core::toytask::{PriorConfig, TrainConfig};

/// Environment variable naming the config file used when `--config` is absent.
pub const CONFIG_ENV: &str = "VERIGATE_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub steps: usize,
    pub max_len: usize,
    pub temperature: f64,
    pub seed: u64,
    pub eval_samples: usize,
    /// Path to a lexicon document written by `gen`.
    pub lexicon: Option<PathBuf>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let core = TrainConfig::default();
        Self {
            steps: core.steps,
            max_len: core.max_len,
            temperature: core.temperature,
            seed: core.seed,
            eval_samples: core.eval_samples,
            lexicon: None,
        }
    }
}

impl TrainSection {
    pub fn to_core(&self) -> TrainConfig {
        TrainConfig {
            steps: self.steps,
            max_len: self.max_len,
            temperature: self.temperature,
            seed: self.seed,
            eval_samples: self.eval_samples,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub reward: RewardConfig,
    pub optim: OptimConfig,
    pub train: TrainSection,
    pub prior: PriorConfig,
}

impl AppConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: AppConfig = toml::from_str(text).context("parsing config")?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = Self::from_toml_str(&text)
            .with_context(|| format!("in config {}", path.display()))?;
        // Relative lexicon paths are taken relative to the config file.
        if let (Some(lex), Some(dir)) = (&cfg.train.lexicon, path.parent()) {
            if lex.is_relative() {
                cfg.train.lexicon = Some(dir.join(lex));
            }
        }
        Ok(cfg)
    }

    /// Built-in defaults, overlaid by the file at `path` when given.
    pub fn resolve(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self::default()),
        }
    }
}

/// Command-line overrides for the reward section.
#[derive(Debug, Clone, Default)]
pub struct RewardOverrides {
    pub alpha: Option<f64>,
    pub tau: Option<f64>,
    pub length_unit: Option<LengthUnit>,
}

impl RewardOverrides {
    pub fn apply(&self, cfg: &mut RewardConfig) {
        if let Some(a) = self.alpha {
            cfg.alpha = a;
        }
        if let Some(t) = self.tau {
            cfg.tau = t;
        }
        if let Some(u) = self.length_unit {
            cfg.length_unit = u;
        }
    }
}
