//! Meshes, voxel grids and the conversions between them.

mod cluster;
mod marching_cubes;
mod mesh;
mod pca;
pub mod shapes;
mod smooth;
mod voxel;
mod voxelize;

pub use cluster::{completeness, dbscan, CompletenessReport, DEFAULT_DBSCAN_RADIUS, DEFAULT_MIN_POINTS};
pub use marching_cubes::marching_cubes;
pub use mesh::{load_mesh, save_mesh, RayHit, TriangleMesh};
pub use pca::{pca_project, PcaProjection};
pub use smooth::{hc_smooth, smooth_mesh, HC_ALPHA, HC_BETA};
pub use voxel::{VoxelGrid, VOXEL_MAGIC, VOXEL_VERSION};
pub use voxelize::{voxelize, Voxelization, FILL_FRACTION};

use thiserror::Error;

pub type Vec3 = nalgebra::Vector3<f64>;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: face `{face}` has {count} vertices; only triangles are supported")]
    NonTriangleFace {
        line: usize,
        face: String,
        count: usize,
    },
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("mesh is empty")]
    EmptyMesh,
    #[error("voxel grid has no occupied voxels")]
    EmptyGrid,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("voxel file format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, GeometryError>;
