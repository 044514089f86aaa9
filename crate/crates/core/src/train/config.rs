use alloc::format;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::AdamConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_iterations: u64,
    pub checkpoint_interval: u64,
    pub log_interval: u64,
    pub seed: u64,
    /// Linear ramp from 0 to `lr` over this many iterations.
    pub warmup_iterations: u64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            batch_size: 32,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            max_iterations: 32_000,
            checkpoint_interval: 1_000,
            log_interval: 100,
            seed: 0,
            warmup_iterations: 1_000,
            clip_norm: 5.0,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, beta1: self.beta1, beta2: self.beta2, epsilon: self.epsilon }
    }

    /// Learning rate for the zero-based `iteration`.
    pub fn lr_at(&self, iteration: u64) -> f64 {
        if self.warmup_iterations == 0 {
            return self.lr;
        }
        self.lr * ((iteration + 1) as f64 / self.warmup_iterations as f64).min(1.0)
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("batch_size", self.batch_size > 0),
            ("lr", self.lr >= 0.0),
            ("beta1", (0.0..1.0).contains(&self.beta1)),
            ("beta2", (0.0..1.0).contains(&self.beta2)),
            ("epsilon", self.epsilon > 0.0),
            ("checkpoint_interval", self.checkpoint_interval > 0),
            ("log_interval", self.log_interval > 0),
            ("clip_norm", self.clip_norm >= 0.0),
        ];
        for (name, ok) in checks {
            if !ok {
                return Err(Error::Config(format!("invalid train.{name}")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_warmup() {
        let c = TrainConfig::default();
        assert_eq!((c.batch_size, c.lr, c.beta1, c.beta2, c.epsilon), (32, 0.001, 0.8, 0.999, 1e-7));
        assert!((c.lr_at(0) - 1e-6).abs() < 1e-18);
        assert!((c.lr_at(499) - 0.0005).abs() < 1e-15);
        assert_eq!(c.lr_at(999), 0.001);
        assert_eq!(c.lr_at(50_000), 0.001);
        let flat = TrainConfig { warmup_iterations: 0, ..c };
        assert_eq!(flat.lr_at(0), 0.001);
        assert!(TrainConfig { batch_size: 0, ..Default::default() }.validate().is_err());
    }
}
