use std::collections::BTreeSet;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AugmentError, Metric, Result};
use crate::grasp::ScoreEntry;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Original,
    Generated {
        parent_a: String,
        parent_b: String,
        metric: Metric,
        neighbor_rank: usize,
        alpha: f64,
        outlier_percentage: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// Mesh file relative to the manifest's directory.
    pub mesh: String,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<ScoreEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub seed: u64,
    pub config: serde_json::Value,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(seed: u64, config: serde_json::Value, entries: Vec<ManifestEntry>) -> Self {
        Self {
            schema_version: MANIFEST_SCHEMA_VERSION,
            seed,
            config,
            entries,
        }
    }

    pub fn originals(&self) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(|e| e.provenance == Provenance::Original)
    }

    /// Checks ids are unique, every mesh file exists under `root` and every
    /// generated entry's parents are listed.
    pub fn validate(&self, root: &Path) -> Result<()> {
        if self.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(AugmentError::InvalidArgument(format!(
                "manifest schema version {} (expected {MANIFEST_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let mut ids = BTreeSet::new();
        for e in &self.entries {
            if !ids.insert(e.id.as_str()) {
                return Err(AugmentError::InvalidArgument(format!("duplicate id {}", e.id)));
            }
            if !root.join(&e.mesh).is_file() {
                return Err(AugmentError::InvalidArgument(format!("mesh {} of {} is missing", e.mesh, e.id)));
            }
        }
        for e in &self.entries {
            if let Provenance::Generated { parent_a, parent_b, .. } = &e.provenance {
                for p in [parent_a, parent_b] {
                    if !ids.contains(p.as_str()) {
                        return Err(AugmentError::InvalidArgument(format!("{} has unknown parent {p}", e.id)));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Appends `round(ratio · originals)` generated entries, drawn uniformly
/// without replacement and kept in their input order.
pub fn augment_dataset(
    original: &DatasetManifest,
    generated: &[ManifestEntry],
    ratio: f64,
    seed: u64,
    config: serde_json::Value,
) -> Result<DatasetManifest> {
    if !(ratio >= 0.0) || !ratio.is_finite() {
        return Err(AugmentError::InvalidArgument(format!("ratio {ratio} must be finite and non-negative")));
    }
    let originals: Vec<ManifestEntry> = original.originals().cloned().collect();
    let parents: BTreeSet<&str> = originals.iter().map(|e| e.id.as_str()).collect();
    for g in generated {
        match &g.provenance {
            Provenance::Generated { parent_a, parent_b, .. } => {
                if !parents.contains(parent_a.as_str()) || !parents.contains(parent_b.as_str()) {
                    return Err(AugmentError::InvalidArgument(format!(
                        "{} has a parent outside the original set",
                        g.id
                    )));
                }
            }
            Provenance::Original => {
                return Err(AugmentError::InvalidArgument(format!("{} is not a generated entry", g.id)));
            }
        }
    }
    let wanted = (ratio * originals.len() as f64).round() as usize;
    if wanted > generated.len() {
        return Err(AugmentError::Insufficient(format!(
            "ratio {ratio} over {} originals needs {wanted} generated shapes, have {} (short by {})",
            originals.len(),
            generated.len(),
            wanted - generated.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, generated.len(), wanted).into_vec();
    picked.sort_unstable();
    let mut entries = originals;
    entries.extend(picked.into_iter().map(|i| generated[i].clone()));
    Ok(DatasetManifest::new(seed, config, entries))
}
