use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{AugmentConfig, AugmentError, GenerationPair, Result};
use crate::geometry::{
    completeness, marching_cubes, smooth_mesh, CompletenessReport, GeometryError, TriangleMesh, VoxelGrid,
    DEFAULT_DBSCAN_RADIUS, DEFAULT_MIN_POINTS,
};
use crate::latent::{interpolate, LatentVector, Model};
use crate::parallel::parallel_map;

const ENCODE_BATCH: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct Reconstruction {
    pub mesh: TriangleMesh,
    pub completeness: CompletenessReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedShape {
    pub id: String,
    pub pair: GenerationPair,
    pub alpha: f64,
    pub mesh: TriangleMesh,
    pub outlier_percentage: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub id: String,
    pub pair: GenerationPair,
    pub alpha: f64,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GenerationOutput {
    pub shapes: Vec<GeneratedShape>,
    pub rejections: Vec<Rejection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaOutliers {
    pub alpha: f64,
    /// Mean over all pairs; an empty decoded grid counts as 100.
    pub mean_outlier_percentage: f64,
    pub pairs: usize,
    pub empty: usize,
}

/// Thresholds a decoded grid, meshes it, smooths the mesh and rescales it so
/// its longest extent is `physical_size`, centered on the origin.
pub fn reconstruct_mesh(decoded: &VoxelGrid, config: &AugmentConfig) -> Result<Reconstruction> {
    let binary = decoded.thresholded(config.iso_level);
    let report = completeness(&binary, DEFAULT_DBSCAN_RADIUS, DEFAULT_MIN_POINTS)?;
    let raw = marching_cubes(&binary.padded(1), 0.5)?;
    let smooth = smooth_mesh(&raw, config.smoothing_iterations);
    let (lo, hi) = smooth.bounding_box().ok_or(GeometryError::EmptyMesh)?;
    let center = (lo + hi) / 2.0;
    let scale = config.physical_size / smooth.max_extent();
    Ok(Reconstruction {
        mesh: smooth.map_vertices(|v| (v - center) * scale),
        completeness: report,
    })
}

/// Content address of one generated shape.
pub fn generated_id(a: &str, b: &str, alpha: f64, checkpoint_digest: &str) -> String {
    let mut h = Sha256::new();
    for part in [a.as_bytes(), b.as_bytes(), &alpha.to_bits().to_le_bytes(), checkpoint_digest.as_bytes()] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part);
    }
    format!("gen_{}", &hex::encode(h.finalize())[..16])
}

fn encode_all(model: &Model, ids: &[&str], grids: &BTreeMap<String, VoxelGrid>) -> Result<BTreeMap<String, LatentVector>> {
    let mut out = BTreeMap::new();
    for chunk in ids.chunks(ENCODE_BATCH) {
        let batch = chunk
            .iter()
            .map(|id| {
                grids
                    .get(*id)
                    .ok_or_else(|| AugmentError::InvalidArgument(format!("no voxel grid for parent {id}")))
            })
            .collect::<Result<Vec<_>>>()?;
        for (id, z) in chunk.iter().zip(model.encode_batch(&batch)?) {
            out.insert(id.to_string(), z);
        }
    }
    Ok(out)
}

/// Decodes every `(pair, α)` interpolation into a mesh. Shapes whose decoded
/// grid is empty or more fragmented than `rejection_cutoff` are rejected;
/// repeated `(a, b, α)` combinations are generated once.
pub fn generate_shapes(
    model: &Model,
    pairs: &[GenerationPair],
    alphas: &[f64],
    grids: &BTreeMap<String, VoxelGrid>,
    config: &AugmentConfig,
    checkpoint_digest: &str,
    jobs: usize,
) -> Result<GenerationOutput> {
    let parents: BTreeSet<&str> = pairs.iter().flat_map(|p| [p.a.as_str(), p.b.as_str()]).collect();
    let parents: Vec<&str> = parents.into_iter().collect();
    let latents = encode_all(model, &parents, grids)?;

    let mut seen = BTreeSet::new();
    let mut tasks = Vec::new();
    for pair in pairs {
        for &alpha in alphas {
            let id = generated_id(&pair.a, &pair.b, alpha, checkpoint_digest);
            if seen.insert(id.clone()) {
                tasks.push((id, pair, alpha));
            }
        }
    }

    let results = parallel_map(&tasks, jobs, |(id, pair, alpha)| -> Result<std::result::Result<GeneratedShape, Rejection>> {
        let z = interpolate(&latents[&pair.a], &latents[&pair.b], *alpha)?;
        let decoded = model.decode(&z)?;
        let reject = |reason: String| Rejection {
            id: id.clone(),
            pair: (*pair).clone(),
            alpha: *alpha,
            reason,
        };
        match reconstruct_mesh(&decoded, config) {
            Err(AugmentError::Geometry(GeometryError::EmptyGrid)) => {
                Ok(Err(reject("decoded grid has no voxel above the iso level".into())))
            }
            Err(e) => Err(e),
            Ok(r) if r.completeness.outlier_percentage > config.rejection_cutoff => Ok(Err(reject(format!(
                "outlier percentage {:.2} exceeds {}",
                r.completeness.outlier_percentage, config.rejection_cutoff
            )))),
            Ok(r) => Ok(Ok(GeneratedShape {
                id: id.clone(),
                pair: (*pair).clone(),
                alpha: *alpha,
                mesh: r.mesh,
                outlier_percentage: r.completeness.outlier_percentage,
            })),
        }
    });

    let mut out = GenerationOutput::default();
    for r in results {
        match r? {
            Ok(shape) => out.shapes.push(shape),
            Err(rejection) => {
                log::info!("rejected {}: {}", rejection.id, rejection.reason);
                out.rejections.push(rejection);
            }
        }
    }
    Ok(out)
}

/// `count` random ordered pairs of distinct indices below `n`.
pub fn random_pairs(n: usize, count: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    if n < 2 {
        return Err(AugmentError::Insufficient(format!("pairs need at least 2 shapes, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| {
            let a = rng.random_range(0..n);
            let b = (a + rng.random_range(1..n)) % n;
            (a, b)
        })
        .collect())
}

/// Mean completeness outlier percentage of decoded interpolants per `α`.
pub fn interpolation_outliers(
    model: &Model,
    grids: &[&VoxelGrid],
    pairs: &[(usize, usize)],
    alphas: &[f64],
    iso_level: f64,
    jobs: usize,
) -> Result<Vec<AlphaOutliers>> {
    let mut latents = Vec::with_capacity(grids.len());
    for chunk in grids.chunks(ENCODE_BATCH) {
        latents.extend(model.encode_batch(chunk)?);
    }
    if let Some(&(a, b)) = pairs.iter().find(|(a, b)| *a >= grids.len() || *b >= grids.len()) {
        return Err(AugmentError::InvalidArgument(format!("pair ({a}, {b}) out of range")));
    }
    let mut rows = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let per_pair = parallel_map(pairs, jobs, |&(a, b)| -> Result<Option<f64>> {
            let z = interpolate(&latents[a], &latents[b], alpha)?;
            let grid = model.decode(&z)?.thresholded(iso_level);
            match completeness(&grid, DEFAULT_DBSCAN_RADIUS, DEFAULT_MIN_POINTS) {
                Ok(r) => Ok(Some(r.outlier_percentage)),
                Err(GeometryError::EmptyGrid) => Ok(None),
                Err(e) => Err(e.into()),
            }
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let empty = per_pair.iter().filter(|v| v.is_none()).count();
        let total: f64 = per_pair.iter().map(|v| v.unwrap_or(100.0)).sum();
        rows.push(AlphaOutliers {
            alpha,
            mean_outlier_percentage: if pairs.is_empty() { 0.0 } else { total / pairs.len() as f64 },
            pairs: pairs.len(),
            empty,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::Metric;
    use crate::corpus::toy_corpus;
    use crate::geometry::voxelize;
    use crate::latent::ModelConfig;

    fn small_model() -> Model {
        let cfg = ModelConfig {
            resolution: 16,
            latent_dim: 8,
            channels: vec![4, 8],
            ..ModelConfig::default()
        };
        Model::new(cfg, 5).unwrap()
    }

    fn grids(n: usize) -> BTreeMap<String, VoxelGrid> {
        toy_corpus(n, 2)
            .into_iter()
            .map(|s| (s.id, voxelize(&s.mesh, 16).unwrap().grid))
            .collect()
    }

    fn pair(a: &str, b: &str) -> GenerationPair {
        GenerationPair { a: a.into(), b: b.into(), metric: Metric::Rarity, neighbor_rank: 1 }
    }

    /// Sub-unity occupancy ball standing in for a decoded grid.
    fn ball(r: usize, radius: f64) -> VoxelGrid {
        let mut g = VoxelGrid::unit(r);
        let c = (r as f64 - 1.0) / 2.0;
        for i in 0..r * r * r {
            let [x, y, z] = g.coords(i);
            let d = ((x as f64 - c).powi(2) + (y as f64 - c).powi(2) + (z as f64 - c).powi(2)).sqrt();
            if d <= radius {
                g.set(x, y, z, 0.9);
            }
        }
        g
    }

    #[test]
    fn reconstruction_is_closed_and_scaled() {
        let cfg = AugmentConfig::default();
        let r = reconstruct_mesh(&ball(16, 5.0), &cfg).unwrap();
        assert!(r.mesh.is_watertight());
        assert!((r.mesh.max_extent() - cfg.physical_size).abs() < 1e-12);
        assert_eq!(r.completeness.outlier_percentage, 0.0);
        let (lo, hi) = r.mesh.bounding_box().unwrap();
        assert!(((lo + hi) / 2.0).norm() < 1e-12);
    }

    #[test]
    fn empty_decode_is_an_empty_grid_error() {
        let err = reconstruct_mesh(&VoxelGrid::unit(8), &AugmentConfig::default()).unwrap_err();
        assert!(matches!(err, AugmentError::Geometry(GeometryError::EmptyGrid)));
    }

    #[test]
    fn ids_are_content_addressed() {
        let a = generated_id("x", "y", 0.5, "d");
        assert_eq!(a, generated_id("x", "y", 0.5, "d"));
        assert_ne!(a, generated_id("y", "x", 0.5, "d"));
        assert_ne!(a, generated_id("x", "y", 0.25, "d"));
        assert_ne!(a, generated_id("x", "y", 0.5, "e"));
        assert_ne!(generated_id("ab", "c", 0.5, "d"), generated_id("a", "bc", 0.5, "d"));
    }

    #[test]
    fn alpha_zero_reproduces_parent_b() {
        let model = small_model();
        let g = grids(2);
        let cfg = AugmentConfig { rejection_cutoff: 100.0, ..AugmentConfig::default() };
        let out = generate_shapes(&model, &[pair("toy_0000", "toy_0001")], &[0.0], &g, &cfg, "d", 1).unwrap();
        let direct = model.decode(&model.encode(&g["toy_0001"]).unwrap()).unwrap();
        match reconstruct_mesh(&direct, &cfg) {
            Ok(r) => assert_eq!(out.shapes[0].mesh, r.mesh),
            Err(_) => assert_eq!(out.rejections.len(), 1),
        }
    }

    #[test]
    fn every_pair_and_alpha_yields_one_result() {
        let model = small_model();
        let g = grids(4);
        let pairs = [pair("toy_0000", "toy_0001"), pair("toy_0002", "toy_0003"), pair("toy_0001", "toy_0000")];
        let alphas = [0.25, 0.5];
        let cfg = AugmentConfig { rejection_cutoff: 100.0, ..AugmentConfig::default() };
        let out = generate_shapes(&model, &pairs, &alphas, &g, &cfg, "d", 2).unwrap();
        assert_eq!(out.shapes.len() + out.rejections.len(), pairs.len() * alphas.len());
        let again = generate_shapes(&model, &pairs, &alphas, &g, &cfg, "d", 1).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn duplicate_combinations_are_generated_once() {
        let model = small_model();
        let g = grids(2);
        let mut p2 = pair("toy_0000", "toy_0001");
        p2.metric = Metric::Graspness;
        let cfg = AugmentConfig { rejection_cutoff: 100.0, ..AugmentConfig::default() };
        let out = generate_shapes(&model, &[pair("toy_0000", "toy_0001"), p2], &[0.5], &g, &cfg, "d", 1).unwrap();
        assert_eq!(out.shapes.len() + out.rejections.len(), 1);
    }

    #[test]
    fn missing_parent_is_an_error() {
        let model = small_model();
        let err = generate_shapes(&model, &[pair("toy_0000", "nope")], &[0.5], &grids(1), &AugmentConfig::default(), "d", 1);
        assert!(err.is_err());
    }

    #[test]
    fn random_pairs_are_distinct_and_seeded() {
        let p = random_pairs(5, 100, 3).unwrap();
        assert!(p.iter().all(|(a, b)| a != b && *a < 5 && *b < 5));
        assert_eq!(p, random_pairs(5, 100, 3).unwrap());
        assert!(random_pairs(1, 3, 0).is_err());
    }

    #[test]
    fn alpha_zero_row_is_the_reconstruction_baseline() {
        let model = small_model();
        let g = grids(4);
        let refs: Vec<&VoxelGrid> = g.values().collect();
        let pairs = random_pairs(4, 6, 1).unwrap();
        let rows = interpolation_outliers(&model, &refs, &pairs, &[0.0, 0.5], 0.5, 2).unwrap();
        assert_eq!(rows.len(), 2);
        let baseline: f64 = pairs
            .iter()
            .map(|&(_, b)| {
                let grid = model.decode(&model.encode(refs[b]).unwrap()).unwrap().thresholded(0.5);
                completeness(&grid, DEFAULT_DBSCAN_RADIUS, DEFAULT_MIN_POINTS)
                    .map(|r| r.outlier_percentage)
                    .unwrap_or(100.0)
            })
            .sum::<f64>()
            / pairs.len() as f64;
        assert!((rows[0].mean_outlier_percentage - baseline).abs() < 1e-12);
    }
}
