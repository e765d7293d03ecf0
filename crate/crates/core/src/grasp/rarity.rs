use serde::{Deserialize, Serialize};

use super::{GraspError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RarityConfig {
    pub k: usize,
    /// Lower bound applied to every neighbour distance.
    pub distance_floor: f64,
}

impl Default for RarityConfig {
    fn default() -> Self {
        Self {
            k: 5,
            distance_floor: 1e-9,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Exact `k` nearest neighbours of every item, nearest first; ties go to the
/// lower index and an item is never its own neighbour.
pub fn knn<V: AsRef<[f64]>>(items: &[V], k: usize) -> Result<Vec<Vec<Neighbor>>> {
    let n = items.len();
    if k == 0 || k >= n {
        return Err(GraspError::InvalidArgument(format!(
            "k = {k} needs 0 < k < item count {n}"
        )));
    }
    let dim = items[0].as_ref().len();
    if items.iter().any(|v| v.as_ref().len() != dim) {
        return Err(GraspError::InvalidArgument("items differ in dimension".into()));
    }
    Ok((0..n)
        .map(|i| {
            let mut all: Vec<Neighbor> = (0..n)
                .filter(|&j| j != i)
                .map(|j| Neighbor {
                    index: j,
                    distance: euclidean(items[i].as_ref(), items[j].as_ref()),
                })
                .collect();
            all.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.index.cmp(&b.index)));
            all.truncate(k);
            all
        })
        .collect())
}

/// Reciprocal of the mean (floored) distance to the neighbours.
pub fn local_reachability_density(neighbors: &[Neighbor], distance_floor: f64) -> f64 {
    let mean = neighbors
        .iter()
        .map(|n| n.distance.max(distance_floor))
        .sum::<f64>()
        / neighbors.len() as f64;
    1.0 / mean
}

/// Mean ratio of each neighbour's density to the item's own, per item.
pub fn rarity<V: AsRef<[f64]>>(items: &[V], config: &RarityConfig) -> Result<Vec<f64>> {
    if !(config.distance_floor > 0.0) {
        return Err(GraspError::InvalidArgument("distance floor must be positive".into()));
    }
    let nn = knn(items, config.k)?;
    let density: Vec<f64> = nn
        .iter()
        .map(|n| local_reachability_density(n, config.distance_floor))
        .collect();
    Ok(nn
        .iter()
        .enumerate()
        .map(|(i, n)| n.iter().map(|p| density[p.index] / density[i]).sum::<f64>() / n.len() as f64)
        .collect())
}
