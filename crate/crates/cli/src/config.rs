use std::path::Path;

use serde::{Deserialize, Serialize};
use shapeaug::augment::AugmentConfig;
use shapeaug::grasp::{GraspConfig, RarityConfig};
use shapeaug::latent::{ModelConfig, TrainConfig};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    /// Toy shapes to generate.
    pub count: usize,
    /// Imported meshes are centered and scaled to this longest extent in
    /// meters; `null` keeps their coordinates.
    pub import_physical_size: Option<f64>,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self { count: 200, import_physical_size: Some(0.10) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    /// Interpolation weights, each in [0, 0.5].
    pub alphas: Vec<f64>,
    /// Random corpus pairs interpolated per weight.
    pub pairs: usize,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self { alphas: vec![0.0, 0.1, 0.25, 0.5], pairs: 64 }
    }
}

/// Every setting of one experiment.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub corpus: CorpusConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub rarity: RarityConfig,
    pub grasp: GraspConfig,
    pub augment: AugmentConfig,
    pub evaluate: EvaluateConfig,
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("reading {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.grasp.validate()?;
        self.augment.validate()?;
        if self.rarity.k == 0 || !(self.rarity.distance_floor > 0.0) {
            return Err(CliError::config("rarity.k and rarity.distance_floor must be positive"));
        }
        if self.corpus.count == 0 {
            return Err(CliError::config("corpus.count must be positive"));
        }
        if self.corpus.import_physical_size.is_some_and(|s| !(s > 0.0)) {
            return Err(CliError::config("corpus.import_physical_size must be positive"));
        }
        if let Some(a) = self.evaluate.alphas.iter().find(|a| !(0.0..=0.5).contains(*a)) {
            return Err(CliError::config(format!("evaluate alpha {a} outside [0, 0.5]")));
        }
        if self.evaluate.alphas.is_empty() || self.evaluate.pairs == 0 {
            return Err(CliError::config("evaluate needs at least one alpha and one pair"));
        }
        Ok(())
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}
