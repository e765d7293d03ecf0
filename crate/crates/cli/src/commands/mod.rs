pub mod corpus;
pub mod evaluate;
pub mod generate;
pub mod score;
pub mod train;

use std::path::{Path, PathBuf};

use shapeaug::geometry::VoxelGrid;
use shapeaug::latent::{LatentVector, Model};

use crate::config::PipelineConfig;
use crate::error::Result;

const ENCODE_BATCH: usize = 16;

pub struct Ctx {
    pub config: PipelineConfig,
    pub out: PathBuf,
    pub jobs: usize,
}

impl Ctx {
    pub fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    pub fn or_default(&self, given: Option<PathBuf>, rel: &str) -> PathBuf {
        given.unwrap_or_else(|| self.path(rel))
    }

    /// `path` relative to the output directory when it lies inside it.
    pub fn label(&self, path: &Path) -> String {
        path.strip_prefix(&self.out).unwrap_or(path).display().to_string()
    }
}

pub const CORPUS_MANIFEST: &str = "corpus/manifest.json";
pub const AE_CHECKPOINT: &str = "models/ae.gfck";
pub const AE_CRITIC_CHECKPOINT: &str = "models/ae-critic.gfck";
pub const SCORES: &str = "scores/scores.json";

pub fn encode_all(model: &Model, grids: &[VoxelGrid]) -> Result<Vec<LatentVector>> {
    let mut out = Vec::with_capacity(grids.len());
    for chunk in grids.chunks(ENCODE_BATCH) {
        let refs: Vec<&VoxelGrid> = chunk.iter().collect();
        out.extend(model.encode_batch(&refs)?);
    }
    Ok(out)
}
