use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};
use shapeaug::augment::DatasetManifest;
use shapeaug::geometry::{load_mesh, voxelize, TriangleMesh, VoxelGrid};
use shapeaug::latent::Model;

use crate::error::{CliError, Result};

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::data(format!("writing {}: {e}", path.display())))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::data(format!("reading {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::data(format!("reading {}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn write_mesh(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, mesh.to_obj_string()).map_err(|e| CliError::data(format!("writing {}: {e}", path.display())))
}

/// A manifest with its meshes, in manifest order.
pub struct Corpus {
    pub manifest: DatasetManifest,
    pub meshes: Vec<TriangleMesh>,
}

impl Corpus {
    pub fn load(manifest_path: &Path) -> Result<Self> {
        let manifest: DatasetManifest = read_json(manifest_path)?;
        let root = manifest_path.parent().unwrap_or(Path::new(".")).to_path_buf();
        manifest.validate(&root).map_err(|e| CliError::data(e.to_string()).context(manifest_path.display()))?;
        let meshes = manifest
            .entries
            .iter()
            .map(|e| load_mesh(root.join(&e.mesh)).map_err(|err| CliError::from(err).context(&e.mesh)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { manifest, meshes })
    }

    pub fn ids(&self) -> Vec<String> {
        self.manifest.entries.iter().map(|e| e.id.clone()).collect()
    }

    pub fn voxelize(&self, resolution: usize) -> Result<Vec<VoxelGrid>> {
        self.meshes
            .iter()
            .zip(&self.manifest.entries)
            .map(|(m, e)| {
                let v = voxelize(m, resolution).map_err(|err| CliError::from(err).context(&e.id))?;
                if v.surface_only {
                    log::warn!("{} is not watertight; only its surface was voxelized", e.id);
                }
                Ok(v.grid)
            })
            .collect()
    }

    pub fn grids_by_id(&self, resolution: usize) -> Result<BTreeMap<String, VoxelGrid>> {
        Ok(self.ids().into_iter().zip(self.voxelize(resolution)?).collect())
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    if !path.is_file() {
        return Err(CliError::data(format!("checkpoint {} not found", path.display())));
    }
    Ok(Model::load(path).map_err(|e| CliError::from(e).context(path.display()))?.0)
}
