use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Stgcn,
    Dcrnn,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Stgcn => "STGCN",
            ModelKind::Dcrnn => "DCRNN",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "stgcn" => Ok(ModelKind::Stgcn),
            "dcrnn" => Ok(ModelKind::Dcrnn),
            other => Err(Error::validation(format!("unknown model '{other}' (expected stgcn or dcrnn)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub num_nodes: usize,
    pub input_features: usize,
    pub history_steps: usize,
    pub horizon_steps: usize,
    pub hidden_units: usize,
    /// Random-walk powers per support (DCRNN).
    pub diffusion_steps: usize,
    /// Chebyshev polynomial order (STGCN).
    pub cheb_order: usize,
    /// Temporal kernel width (STGCN).
    pub temporal_kernel: usize,
}

/// Temporal convolutions inside the two spatio-temporal blocks.
pub const STGCN_TEMPORAL_LAYERS: usize = 4;

impl ModelConfig {
    pub fn new(kind: ModelKind, num_nodes: usize) -> Self {
        ModelConfig {
            kind,
            num_nodes,
            input_features: 1,
            history_steps: 12,
            horizon_steps: 3,
            hidden_units: 16,
            diffusion_steps: 2,
            cheb_order: 3,
            temporal_kernel: 3,
        }
    }

    /// Frames left after the STGCN blocks; the output layer's kernel spans
    /// all of them.
    pub fn stgcn_remaining_steps(&self) -> usize {
        self.history_steps
            .saturating_sub(STGCN_TEMPORAL_LAYERS * (self.temporal_kernel.saturating_sub(1)))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("num_nodes", self.num_nodes),
            ("input_features", self.input_features),
            ("history_steps", self.history_steps),
            ("horizon_steps", self.horizon_steps),
            ("hidden_units", self.hidden_units),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::validation(format!("{name} must be at least 1")));
            }
        }
        if self.kind == ModelKind::Stgcn {
            if self.cheb_order == 0 || self.temporal_kernel == 0 {
                return Err(Error::validation("cheb_order and temporal_kernel must be at least 1"));
            }
            if self.stgcn_remaining_steps() == 0 {
                return Err(Error::validation(format!(
                    "STGCN needs history_steps >= {} for temporal kernel {}, got {}",
                    STGCN_TEMPORAL_LAYERS * (self.temporal_kernel - 1) + 1,
                    self.temporal_kernel,
                    self.history_steps
                )));
            }
            if self.horizon_steps > 1 && self.input_features != 1 {
                return Err(Error::validation(
                    "STGCN multi-step rollout feeds predictions back as input and needs input_features = 1",
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub scheduled_sampling_tau: f64,
    /// Train, validation and test fractions of the days.
    pub split: (f64, f64, f64),
    pub patience: usize,
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 50,
            epochs: 50,
            learning_rate: 0.01,
            seed: 1,
            scheduled_sampling_tau: 100.0,
            split: (0.7, 0.1, 0.2),
            patience: 10,
            clip_norm: 5.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::validation("batch size must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::validation("learning rate must be positive"));
        }
        if !(self.scheduled_sampling_tau > 0.0) {
            return Err(Error::validation("scheduled sampling tau must be positive"));
        }
        let (a, b, c) = self.split;
        if [a, b, c].iter().any(|f| !(0.0..=1.0).contains(f)) || (a + b + c - 1.0).abs() > 1e-9 {
            return Err(Error::validation(format!("split ({a}, {b}, {c}) must be fractions summing to 1")));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::validation("clip norm must be positive"));
        }
        Ok(())
    }
}
