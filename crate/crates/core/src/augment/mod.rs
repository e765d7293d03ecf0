//! Dataset augmentation: pick high-scoring shapes, pair latent neighbours,
//! decode their interpolations into meshes and assemble dataset manifests.

mod generate;
mod manifest;
mod select;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::GeometryError;
use crate::grasp::GraspError;
use crate::latent::LatentError;

pub use generate::{
    generate_shapes, generated_id, interpolation_outliers, random_pairs, reconstruct_mesh, AlphaOutliers,
    GeneratedShape, GenerationOutput, Reconstruction, Rejection,
};
pub use manifest::{augment_dataset, DatasetManifest, ManifestEntry, Provenance, MANIFEST_SCHEMA_VERSION};
pub use select::{form_generation_pairs, percentile, select_by, select_high_scoring, GenerationPair};

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("too few shapes: {0}")]
    Insufficient(String),
    #[error(transparent)]
    Latent(#[from] LatentError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Grasp(#[from] GraspError),
}

pub type Result<T> = std::result::Result<T, AugmentError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Rarity,
    Graspness,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::Rarity, Metric::Graspness];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Rarity => "rarity",
            Metric::Graspness => "graspness",
        }
    }
}

/// Which tail of a score distribution is selected.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    High,
    Low,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    /// Percentile in (0, 100) a score must exceed to be selected.
    pub t: f64,
    /// First neighbour rank paired with each selected shape.
    pub n: usize,
    /// Number of further ranks after `n`.
    pub k: usize,
    pub alphas: Vec<f64>,
    /// Generated shapes per original shape.
    pub ratio: f64,
    /// Generated shapes with a larger outlier percentage are dropped.
    pub rejection_cutoff: f64,
    pub iso_level: f64,
    pub smoothing_iterations: usize,
    /// Longest extent of generated meshes, meters.
    pub physical_size: f64,
    pub rarity_direction: Direction,
    pub graspness_direction: Direction,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            t: 75.0,
            n: 2,
            k: 3,
            alphas: vec![0.25, 0.5],
            ratio: 1.0,
            rejection_cutoff: 20.0,
            iso_level: 0.5,
            smoothing_iterations: 10,
            physical_size: 0.10,
            rarity_direction: Direction::High,
            graspness_direction: Direction::High,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(AugmentError::Config(msg));
        if !(self.t > 0.0 && self.t < 100.0) {
            return bad(format!("t = {} must lie in (0, 100)", self.t));
        }
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        if self.alphas.is_empty() {
            return bad("alphas must not be empty".into());
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return bad(format!("alpha {a} must lie in (0, 1)"));
        }
        if !(self.ratio >= 0.0) || !self.ratio.is_finite() {
            return bad(format!("ratio {} must be finite and non-negative", self.ratio));
        }
        if !(0.0..=100.0).contains(&self.rejection_cutoff) {
            return bad(format!("rejection_cutoff {} must lie in [0, 100]", self.rejection_cutoff));
        }
        if !(self.iso_level > 0.0 && self.iso_level < 1.0) {
            return bad(format!("iso_level {} must lie in (0, 1)", self.iso_level));
        }
        if !(self.physical_size > 0.0) || !self.physical_size.is_finite() {
            return bad("physical_size must be positive".into());
        }
        Ok(())
    }

    pub fn direction(&self, metric: Metric) -> Direction {
        match metric {
            Metric::Rarity => self.rarity_direction,
            Metric::Graspness => self.graspness_direction,
        }
    }
}
