//! The run configuration: one TOML (or JSON) document covering data, models,
//! both training phases, ablation and sweep settings.
//!
//! Every field has a default, so an empty file is a valid configuration.
//! Unknown keys are rejected. `RunConfig::default().to_toml()` prints the full
//! set of defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Setting;
use crate::error::{Error, Result};
use crate::eval::{Experiment, SweepParameter};
use crate::pipeline::Variant;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationConfig {
    /// Number of seeds per cell, derived from the run seed.
    pub seeds: usize,
    pub settings: Vec<Setting>,
    pub variants: Vec<Variant>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig { seeds: 5, settings: Setting::ALL.to_vec(), variants: Variant::ALL.to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub parameter: SweepParameter,
    /// Empty means the parameter's published grid.
    pub grid: Vec<f64>,
    pub seeds: usize,
    pub setting: Setting,
    pub variant: Variant,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            parameter: SweepParameter::AlphaD,
            grid: Vec::new(),
            seeds: 5,
            setting: Setting::I2I,
            variant: Variant::Sdcda,
        }
    }
}

impl SweepConfig {
    pub fn effective_grid(&self) -> Vec<f64> {
        if self.grid.is_empty() {
            self.parameter.default_grid()
        } else {
            self.grid.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// The only entropy source; every other seed is derived from it.
    pub seed: u64,
    /// Scenario applied to labeled data before training.
    pub setting: Setting,
    /// Components enabled by `pretrain` / `adapt`.
    pub variant: Variant,
    pub experiment: Experiment,
    pub ablation: AblationConfig,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            setting: Setting::I2I,
            variant: Variant::Sdcda,
            experiment: Experiment::default(),
            ablation: AblationConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads TOML, or JSON when the path ends in `.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        if self.seed > i64::MAX as u64 {
            return Err(Error::config("seed must fit in a signed 64-bit integer"));
        }
        toml::to_string(self).map_err(|e| Error::config(e.to_string()))
    }

    /// SHA-256 of the canonical TOML rendering.
    pub fn digest(&self) -> Result<String> {
        Ok(crate::tensor::sha256_hex(self.to_toml()?.as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        self.experiment.validate()?;
        if self.ablation.seeds == 0 || self.sweep.seeds == 0 {
            return Err(Error::config("seed counts must be positive"));
        }
        if self.ablation.settings.is_empty() || self.ablation.variants.is_empty() {
            return Err(Error::config("ablation needs at least one setting and one variant"));
        }
        let grid = self.sweep.effective_grid();
        if grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::config("sweep grid must be strictly ascending"));
        }
        Ok(())
    }

    /// Advisory messages for out-of-band hyper-parameters.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.variant.pretrain() {
            w.extend(self.experiment.pretrain.warnings());
        }
        w.extend(self.experiment.adapt.warnings());
        w
    }
}

/// `n` seeds derived from `base`.
pub fn derive_seeds(base: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| base.wrapping_add(i)).collect()
}
