use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{GeometryError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaProjection {
    /// One row of `components` coordinates per input vector.
    pub coords: Vec<Vec<f64>>,
    /// Covariance eigenvalues (population normalization), descending, all of them.
    pub eigenvalues: Vec<f64>,
    pub mean: Vec<f64>,
    /// Unit principal axes, leading first.
    pub components: Vec<Vec<f64>>,
}

/// Projects the centered vectors onto their leading principal axes.
///
/// Each axis's sign is fixed so its largest-magnitude entry is positive.
pub fn pca_project<V: AsRef<[f64]>>(vectors: &[V], components: usize) -> Result<PcaProjection> {
    if vectors.len() < 2 {
        return Err(GeometryError::InvalidArgument(format!(
            "PCA needs at least 2 vectors, got {}",
            vectors.len()
        )));
    }
    let dim = vectors[0].as_ref().len();
    if dim == 0 || vectors.iter().any(|v| v.as_ref().len() != dim) {
        return Err(GeometryError::InvalidArgument(
            "PCA vectors must share a positive dimension".into(),
        ));
    }
    if components == 0 || components > dim {
        return Err(GeometryError::InvalidArgument(format!(
            "cannot take {components} components of {dim}-dimensional data"
        )));
    }
    let n = vectors.len();
    let data = DMatrix::from_fn(n, dim, |i, j| vectors[i].as_ref()[j]);
    let mean: DVector<f64> = data.row_mean().transpose();
    let centered = DMatrix::from_fn(n, dim, |i, j| data[(i, j)] - mean[j]);
    let cov = centered.transpose() * &centered / n as f64;
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let axes: Vec<DVector<f64>> = order[..components]
        .iter()
        .map(|&i| {
            let v = eig.eigenvectors.column(i).into_owned();
            let lead = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            if lead < 0.0 {
                -v
            } else {
                v
            }
        })
        .collect();
    let coords = (0..n)
        .map(|i| {
            let row = centered.row(i).transpose();
            axes.iter().map(|a| a.dot(&row)).collect()
        })
        .collect();
    Ok(PcaProjection {
        coords,
        eigenvalues,
        mean: mean.iter().copied().collect(),
        components: axes.iter().map(|a| a.iter().copied().collect()).collect(),
    })
}
