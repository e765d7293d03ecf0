//! The AE-Critic: a 3D convolutional autoencoder over occupancy grids and a
//! critic that regresses the interpolation weight of decoded latent mixtures.

mod config;
mod model;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::GeometryError;
use crate::tensor::{Tensor, TensorError};

pub use config::{ModelConfig, TrainConfig};
pub use model::{sidecar_path, CheckpointMeta, Model};
pub use train::{
    ae_loss_with_gradients, critic_loss_with_gradients, train, EpochRecord, InterpolationBatch,
    TrainingReport,
};

#[derive(Debug, Error)]
pub enum LatentError {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, LatentError>;

/// A finite point in latent space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LatentVector(Vec<f64>);

impl LatentVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(LatentError::InvalidArgument(
                "latent vectors must be non-empty and finite".into(),
            ));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn distance(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl TryFrom<Vec<f64>> for LatentVector {
    type Error = LatentError;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<LatentVector> for Vec<f64> {
    fn from(v: LatentVector) -> Self {
        v.0
    }
}

impl AsRef<[f64]> for LatentVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// `α·z1 + (1 − α)·z2`.
///
/// Both weights are derived from whichever of `α`, `1 − α` is at least one
/// half, where `1 − w` is exact; so swapping the endpoints and passing
/// `1 − α` reproduces the result bit for bit.
pub fn interpolate(z1: &LatentVector, z2: &LatentVector, alpha: f64) -> Result<LatentVector> {
    if z1.len() != z2.len() {
        return Err(LatentError::Dimension(format!(
            "interpolating latents of length {} and {}",
            z1.len(),
            z2.len()
        )));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(LatentError::InvalidArgument(format!("alpha {alpha} outside [0, 1]")));
    }
    let (w1, w2) = if alpha >= 0.5 {
        (alpha, 1.0 - alpha)
    } else {
        let w2 = 1.0 - alpha;
        (1.0 - w2, w2)
    };
    LatentVector::new(
        z1.0.iter()
            .zip(&z2.0)
            .map(|(a, b)| w1 * a + w2 * b)
            .collect(),
    )
}

/// Critic objective from its outputs: `mean (c_α − α)² + mean c_mix²`.
pub fn critic_objective(critic_on_interpolants: &[f64], alpha: &[f64], critic_on_mixture: &[f64]) -> Result<f64> {
    if critic_on_interpolants.len() != alpha.len() || critic_on_interpolants.is_empty() || critic_on_mixture.is_empty() {
        return Err(LatentError::Dimension("critic objective batch sizes differ or are empty".into()));
    }
    if let Some(a) = alpha.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(LatentError::InvalidArgument(format!("alpha {a} outside [0, 1]")));
    }
    let fit = critic_on_interpolants
        .iter()
        .zip(alpha)
        .map(|(c, a)| (c - a) * (c - a))
        .sum::<f64>()
        / alpha.len() as f64;
    let reg = critic_on_mixture.iter().map(|c| c * c).sum::<f64>() / critic_on_mixture.len() as f64;
    Ok(fit + reg)
}

/// Autoencoder objective: `BCE(x̂, x) + λ·mean c_α²`.
pub fn ae_objective(x: &Tensor, x_hat: &Tensor, critic_on_interpolants: &[f64], lambda: f64) -> Result<f64> {
    let bce = crate::tensor::bce_loss(x_hat, x)?;
    if critic_on_interpolants.is_empty() {
        return Err(LatentError::Dimension("no critic outputs".into()));
    }
    let reg = critic_on_interpolants.iter().map(|c| c * c).sum::<f64>() / critic_on_interpolants.len() as f64;
    Ok(bce + lambda * reg)
}
