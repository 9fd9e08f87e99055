//! Run configuration, read from a UTF-8 JSON document. Every field has a
//! default and unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{NdrError, Result};
use crate::model::ModelConfig;
use crate::optim::AdamConfig;
use crate::synth::DatasetConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    /// Weight of the clean-reconstruction term.
    pub lambda: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub crop_size: usize,
    pub steps: u64,
    pub seed: u64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Held-out evaluation period in steps (0 disables periodic evaluation).
    pub eval_every: u64,
    /// Held-out images per degradation kind.
    pub eval_per_kind: usize,
    pub checkpoint_every: u64,
    /// When non-zero, alternate between the degradation and restoration
    /// terms every `alt_steps` steps instead of stepping on their sum.
    pub alt_steps: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            lr: 1e-4,
            batch_size: 4,
            crop_size: 32,
            steps: 2000,
            seed: 0,
            weight_decay: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            eval_every: 200,
            eval_per_kind: 16,
            checkpoint_every: 500,
            alt_steps: 0,
        }
    }
}

impl TrainingConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, beta1: self.beta1, beta2: self.beta2, eps: self.eps, weight_decay: self.weight_decay }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Dataset directory (holds `manifest.json`).
    pub dataset: PathBuf,
    /// Output directory for checkpoints, metrics and reports.
    pub run: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self { dataset: PathBuf::from("data"), run: PathBuf::from("run") }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub train: TrainingConfig,
    pub model: ModelConfig,
    pub dataset: DatasetConfig,
    pub paths: PathsConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| NdrError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path).map_err(|e| NdrError::io(path, e))?;
        let cfg = Self::from_json(&text).map_err(|e| match e {
            NdrError::Config(m) => NdrError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        Ok((cfg, text))
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.train;
        if !(t.lambda.is_finite() && t.lambda >= 0.0) {
            return Err(NdrError::Config(format!("train.lambda must be finite and >= 0, got {}", t.lambda)));
        }
        if !(t.lr.is_finite() && t.lr > 0.0) {
            return Err(NdrError::Config(format!("train.lr must be positive, got {}", t.lr)));
        }
        if t.batch_size == 0 {
            return Err(NdrError::Config("train.batch_size must be positive".into()));
        }
        for (name, b) in [("beta1", t.beta1), ("beta2", t.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(NdrError::Config(format!("train.{name} must lie in [0, 1), got {b}")));
            }
        }
        if !(t.eps > 0.0) || !(t.weight_decay >= 0.0) {
            return Err(NdrError::Config("train.eps must be positive and train.weight_decay >= 0".into()));
        }
        self.model.validate()?;
        self.dataset.validate()?;
        if t.crop_size == 0 || t.crop_size > self.dataset.size {
            return Err(NdrError::Config(format!(
                "train.crop_size {} must lie in [1, dataset.size = {}]",
                t.crop_size, self.dataset.size
            )));
        }
        self.model.check_input(t.crop_size, t.crop_size).map_err(|e| NdrError::Config(format!("train.crop_size: {e}")))?;
        let size = self.dataset.size;
        self.model.check_input(size, size).map_err(|e| NdrError::Config(format!("dataset.size: {e}")))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}
