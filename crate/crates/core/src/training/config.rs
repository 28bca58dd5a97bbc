//! Training hyperparameters.

use serde::{Deserialize, Serialize};

use crate::error::{DeciError, Result};
use crate::sem::{ModelConfig, NoiseKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub noise: NoiseKind,
    pub hidden_dim: usize,
    pub embedding_dim: Option<usize>,
    pub spline_bins: usize,
    pub lambda_s: f64,
    pub temperature: f64,
    pub inner_max_steps: usize,
    pub inner_patience: usize,
    pub lr: f64,
    pub lr_decay_factor: f64,
    pub lr_patience: usize,
    pub max_lr_decays: usize,
    pub outer_max_steps: usize,
    pub progress_ratio: f64,
    pub rho_multiplier: f64,
    pub penalty_cap: f64,
    /// `None`: the whole dataset when it has at most 1024 rows, else 512.
    pub batch_size: Option<usize>,
    /// Posterior draws used to estimate `E_q[h(G)]` after each outer step.
    pub penalty_samples: usize,
    /// Hidden width of the imputation network (missing data only).
    pub imputer_hidden_dim: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            noise: NoiseKind::Spline,
            hidden_dim: 128,
            embedding_dim: None,
            spline_bins: 8,
            lambda_s: 5.0,
            temperature: 0.25,
            inner_max_steps: 6000,
            inner_patience: 1500,
            lr: 0.01,
            lr_decay_factor: 10.0,
            lr_patience: 500,
            max_lr_decays: 2,
            outer_max_steps: 100,
            progress_ratio: 0.65,
            rho_multiplier: 10.0,
            penalty_cap: 1e13,
            batch_size: None,
            penalty_samples: 100,
            imputer_hidden_dim: 128,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Smaller networks and a shorter inner loop for single-core runs.
    pub fn compact() -> Self {
        Self {
            hidden_dim: 32,
            inner_max_steps: 1200,
            inner_patience: 300,
            lr_patience: 100,
            imputer_hidden_dim: 32,
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_noise(mut self, noise: NoiseKind) -> Self {
        self.noise = noise;
        self
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            noise: self.noise,
            hidden_dim: self.hidden_dim,
            embedding_dim: self.embedding_dim,
            spline_bins: self.spline_bins,
        }
    }

    pub fn batch_size_for(&self, n: usize) -> usize {
        match self.batch_size {
            Some(b) => b.min(n).max(1),
            None if n <= 1024 => n.max(1),
            None => 512,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hidden_dim", self.hidden_dim as f64),
            ("spline_bins", self.spline_bins as f64),
            ("temperature", self.temperature),
            ("inner_max_steps", self.inner_max_steps as f64),
            ("inner_patience", self.inner_patience as f64),
            ("lr", self.lr),
            ("lr_patience", self.lr_patience as f64),
            ("outer_max_steps", self.outer_max_steps as f64),
            ("penalty_cap", self.penalty_cap),
            ("penalty_samples", self.penalty_samples as f64),
            ("imputer_hidden_dim", self.imputer_hidden_dim as f64),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(DeciError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.lambda_s < 0.0 {
            return Err(DeciError::Config("lambda_s must be non-negative".into()));
        }
        if !(self.progress_ratio > 0.0 && self.progress_ratio < 1.0) {
            return Err(DeciError::Config("progress_ratio must lie in (0, 1)".into()));
        }
        if !(self.lr_decay_factor > 1.0) || !(self.rho_multiplier > 1.0) {
            return Err(DeciError::Config("lr_decay_factor and rho_multiplier must exceed 1".into()));
        }
        if self.batch_size == Some(0) {
            return Err(DeciError::Config("batch_size must be positive".into()));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| DeciError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config serializes")
    }
}
