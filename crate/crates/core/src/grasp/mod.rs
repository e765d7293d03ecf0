//! Shape scores: rarity in latent space (a local-outlier-factor variant) and
//! graspness from sampled antipodal parallel-jaw grasps.

pub mod hull;
mod quality;
mod rarity;
mod sampler;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use quality::{cone_reference, contact_wrenches, epsilon_quality, Contact, WrenchModel};
pub use rarity::{knn, local_reachability_density, rarity, Neighbor, RarityConfig};
pub use sampler::{
    ferrari_canny, graspness, robust_quality, sample_antipodal_grasps, torque_scale_for,
    GraspCandidate, GraspSummary,
};

#[derive(Debug, Error)]
pub enum GraspError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, GraspError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraspConfig {
    pub friction: f64,
    pub cone_edges: usize,
    pub samples_per_object: usize,
    /// Meters.
    pub gripper_max_width: f64,
    pub quality_threshold: f64,
    /// Meters; `None` uses the largest centroid-to-surface distance.
    pub torque_scale: Option<f64>,
    pub robustness_trials: usize,
    /// Std-dev of contact position noise, meters.
    pub position_noise: f64,
    /// Std-dev of additive friction noise.
    pub friction_noise: f64,
    /// Contact patch radius for torsional friction, meters.
    pub patch_radius: f64,
    /// Sampling attempts allowed per requested grasp.
    pub attempts_per_sample: usize,
}

impl Default for GraspConfig {
    fn default() -> Self {
        Self {
            friction: 0.5,
            cone_edges: 8,
            samples_per_object: 100,
            gripper_max_width: 0.08,
            quality_threshold: 0.002,
            torque_scale: None,
            robustness_trials: 20,
            position_noise: 0.002,
            friction_noise: 0.05,
            patch_radius: 0.005,
            attempts_per_sample: 10,
        }
    }
}

impl GraspConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(GraspError::Config(msg.into()));
        if !(self.friction >= 0.0) || !self.friction.is_finite() {
            return bad("friction must be a finite non-negative number");
        }
        if self.cone_edges < 3 {
            return bad("cone_edges must be at least 3");
        }
        if self.samples_per_object == 0 || self.robustness_trials == 0 || self.attempts_per_sample == 0 {
            return bad("sample, trial and attempt counts must be positive");
        }
        if !(self.gripper_max_width > 0.0) || !(self.quality_threshold > 0.0) {
            return bad("gripper_max_width and quality_threshold must be positive");
        }
        if self.torque_scale.is_some_and(|s| !(s > 0.0) || !s.is_finite()) {
            return bad("torque_scale must be positive");
        }
        if !(self.position_noise >= 0.0) || !(self.friction_noise >= 0.0) || !(self.patch_radius >= 0.0) {
            return bad("noise levels and patch_radius must be non-negative");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub rarity: f64,
    pub graspness: f64,
    pub n_grasps: usize,
}

/// Shape id to scores, serialized as a JSON object.
pub type ScoreTable = BTreeMap<String, ScoreEntry>;

/// Seed for one named item, independent of processing order.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}
