use serde::{Deserialize, Serialize};

use super::{LatentError, Result};

/// Architecture and loss weights of the autoencoder and critic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub resolution: usize,
    pub latent_dim: usize,
    /// Output channels of each strided conv layer; the decoder mirrors them.
    pub channels: Vec<usize>,
    pub kernel_size: usize,
    pub stride: usize,
    /// Weight of the real shape in the critic's regularization mixture.
    pub gamma: f64,
    /// Weight of the critic term in the autoencoder loss.
    pub lambda: f64,
    /// Interval the training-time interpolation weights are drawn from.
    pub alpha_range: [f64; 2],
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            resolution: 32,
            latent_dim: 32,
            channels: vec![16, 32, 64, 128],
            kernel_size: 4,
            stride: 2,
            gamma: 0.2,
            lambda: 0.5,
            alpha_range: [0.0, 0.5],
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(LatentError::Config(m));
        if self.channels.is_empty() || self.channels.contains(&0) {
            return bad("channel schedule must be non-empty and positive".into());
        }
        if self.latent_dim == 0 {
            return bad("latent dimension must be positive".into());
        }
        if self.stride == 0 || self.kernel_size < self.stride {
            return bad(format!(
                "kernel size {} must be at least stride {}",
                self.kernel_size, self.stride
            ));
        }
        if (self.kernel_size - self.stride) % 2 != 0 {
            return bad(format!(
                "kernel size {} minus stride {} must be even for size-halving padding",
                self.kernel_size, self.stride
            ));
        }
        let div = self.stride.pow(self.channels.len() as u32);
        if self.resolution == 0 || self.resolution % div != 0 {
            return bad(format!(
                "resolution {} is not divisible by stride^layers = {div}",
                self.resolution
            ));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma {} outside [0, 1]", self.gamma));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda {} must be non-negative", self.lambda));
        }
        let [lo, hi] = self.alpha_range;
        if !(0.0 <= lo && lo <= hi && hi <= 0.5) {
            return bad(format!("alpha range [{lo}, {hi}] must lie within [0, 0.5]"));
        }
        Ok(())
    }

    pub fn padding(&self) -> usize {
        (self.kernel_size - self.stride) / 2
    }

    /// Spatial side of the deepest feature map.
    pub fn bottleneck_side(&self) -> usize {
        self.resolution / self.stride.pow(self.channels.len() as u32)
    }

    /// Length of the flattened deepest feature map.
    pub fn feature_len(&self) -> usize {
        self.channels.last().copied().unwrap_or(0) * self.bottleneck_side().pow(3)
    }
}

/// Optimization schedule for both training phases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub phase1_epochs: usize,
    pub phase2_epochs: usize,
    pub phase1_learning_rate: f64,
    pub ae_learning_rate: f64,
    pub critic_learning_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            phase1_epochs: 30,
            phase2_epochs: 10,
            phase1_learning_rate: 1e-3,
            ae_learning_rate: 1e-4,
            critic_learning_rate: 1e-3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(LatentError::Config(
                "batch size must be at least 2 for batch normalization".into(),
            ));
        }
        for lr in [
            self.phase1_learning_rate,
            self.ae_learning_rate,
            self.critic_learning_rate,
        ] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(LatentError::Config(format!("learning rate {lr} must be positive")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = ModelConfig::default();
        c.validate().unwrap();
        assert_eq!(c.padding(), 1);
        assert_eq!(c.bottleneck_side(), 2);
        assert_eq!(c.feature_len(), 1024);
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        let base = ModelConfig::default();
        let cases = [
            ModelConfig { resolution: 24, ..base.clone() },
            ModelConfig { gamma: 1.5, ..base.clone() },
            ModelConfig { lambda: -1.0, ..base.clone() },
            ModelConfig { alpha_range: [0.0, 0.7], ..base.clone() },
            ModelConfig { kernel_size: 3, ..base.clone() },
            ModelConfig { channels: vec![], ..base.clone() },
        ];
        for c in cases {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn partial_json_uses_defaults() {
        let c: ModelConfig = serde_json::from_str(r#"{"resolution": 64, "latent_dim": 128}"#).unwrap();
        assert_eq!(c.channels, vec![16, 32, 64, 128]);
        assert_eq!(c.resolution, 64);
        assert!(serde_json::from_str::<ModelConfig>(r#"{"resolutoin": 64}"#).is_err());
    }
}
