use serde::{Deserialize, Serialize};

use crate::conditioning::{ConditionerConfig, ConditioningKind, FusionKind};
use crate::denoiser::DenoiserConfig;
use crate::diffusion::ScheduleConfig;
use crate::error::{Error, Result};
use crate::optim::AdamConfig;

/// Every knob of a denoiser training run. Serialised as the run's config
/// file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
    pub conditioning: ConditioningKind,
    pub fusion: FusionKind,
    /// Global gradient-norm ceiling; `null` disables clipping.
    pub clip_norm: Option<f64>,
    /// Save an intermediate checkpoint every this many iterations.
    pub checkpoint_every: Option<usize>,
    pub base_channels: usize,
    pub depth: usize,
    pub temporal: bool,
    pub time_embed_dim: usize,
    pub token_dim: usize,
    pub cond_dim: usize,
    pub schedule: ScheduleConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            learning_rate: 1e-5,
            batch_size: 8,
            beta1: 0.9,
            beta2: 0.999,
            seed: 0,
            conditioning: ConditioningKind::Learnable,
            fusion: FusionKind::Linear,
            clip_norm: Some(1.0),
            checkpoint_every: None,
            base_channels: 32,
            depth: 3,
            temporal: true,
            time_embed_dim: 32,
            token_dim: 32,
            cond_dim: 64,
            schedule: ScheduleConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.checkpoint_every == Some(0) {
            return Err(Error::Config("checkpoint interval must be positive".into()));
        }
        if self.clip_norm.is_some_and(|c| !(c > 0.0)) {
            return Err(Error::Config("clip norm must be positive".into()));
        }
        Ok(())
    }

    pub fn conditioner(&self) -> ConditionerConfig {
        ConditionerConfig {
            kind: self.conditioning,
            fusion: self.fusion,
            token_dim: self.token_dim,
            cond_dim: self.cond_dim,
        }
    }

    pub fn denoiser(&self, latent_channels: usize, frames: usize) -> DenoiserConfig {
        DenoiserConfig {
            latent_channels,
            base_channels: self.base_channels,
            depth: self.depth,
            cond_dim: self.cond_dim,
            temporal: self.temporal,
            time_embed_dim: self.time_embed_dim,
            frames,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: 1e-8,
            clip_norm: self.clip_norm,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_and_defaults() {
        let cfg = TrainConfig {
            conditioning: ConditioningKind::TextFinetuned,
            fusion: FusionKind::AttnTripletQuery,
            ..TrainConfig::default()
        };
        let json = serde_json::to_string(&cfg).unwrap();
        assert!(json.contains("\"text-ft\"") && json.contains("\"att-t\""));
        assert_eq!(serde_json::from_str::<TrainConfig>(&json).unwrap(), cfg);
        let partial: TrainConfig = serde_json::from_str(r#"{"iterations": 5}"#).unwrap();
        assert_eq!(partial.iterations, 5);
        assert_eq!(partial.learning_rate, 1e-5);
    }

    #[test]
    fn invalid_values() {
        assert!(TrainConfig { learning_rate: 0.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }
}
