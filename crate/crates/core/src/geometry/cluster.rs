use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{GeometryError, Result, VoxelGrid};

/// Neighbourhood radius in voxel units; between √3 and 2, so it reaches
/// exactly the 26 lattice neighbours.
pub const DEFAULT_DBSCAN_RADIUS: f64 = 1.8;
pub const DEFAULT_MIN_POINTS: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompletenessReport {
    pub cluster_count: usize,
    pub major_cluster_size: usize,
    pub outlier_percentage: f64,
}

/// DBSCAN labels: `Some(cluster)` or `None` for noise.
///
/// A point is core when at least `min_points` points (itself included) lie
/// within `radius`. Border points join the first cluster that reaches them.
pub fn dbscan(points: &[[f64; 3]], radius: f64, min_points: usize) -> Vec<Option<usize>> {
    let hash = SpatialHash::new(points, radius);
    let neighbors: Vec<Vec<usize>> = (0..points.len()).map(|i| hash.within(points, i)).collect();
    let core: Vec<bool> = neighbors.iter().map(|n| n.len() >= min_points).collect();

    let mut labels = vec![None; points.len()];
    let mut cluster = 0;
    for seed in 0..points.len() {
        if !core[seed] || labels[seed].is_some() {
            continue;
        }
        labels[seed] = Some(cluster);
        let mut stack = vec![seed];
        while let Some(p) = stack.pop() {
            for &q in &neighbors[p] {
                if labels[q].is_none() {
                    labels[q] = Some(cluster);
                    if core[q] {
                        stack.push(q);
                    }
                }
            }
        }
        cluster += 1;
    }
    labels
}

struct SpatialHash {
    radius: f64,
    cells: HashMap<[i64; 3], Vec<usize>>,
}

impl SpatialHash {
    fn new(points: &[[f64; 3]], radius: f64) -> Self {
        let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::cell(p, radius)).or_default().push(i);
        }
        Self { radius, cells }
    }

    fn cell(p: &[f64; 3], radius: f64) -> [i64; 3] {
        p.map(|c| (c / radius).floor() as i64)
    }

    /// Indices within `radius` of point `i`, including `i`, in ascending order.
    fn within(&self, points: &[[f64; 3]], i: usize) -> Vec<usize> {
        let p = &points[i];
        let c = Self::cell(p, self.radius);
        let r2 = self.radius * self.radius;
        let mut out = Vec::new();
        for dz in -1..=1 {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    if let Some(bucket) = self.cells.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                        for &j in bucket {
                            let q = &points[j];
                            let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2);
                            if d2 <= r2 {
                                out.push(j);
                            }
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// Share of occupied voxels outside the largest DBSCAN cluster.
///
/// Occupancy above one half counts as occupied; distances are in voxel units.
pub fn completeness(grid: &VoxelGrid, radius: f64, min_points: usize) -> Result<CompletenessReport> {
    if !(radius > 0.0) || min_points == 0 {
        return Err(GeometryError::InvalidArgument(format!(
            "DBSCAN radius {radius} and min-points {min_points} must be positive"
        )));
    }
    let points: Vec<[f64; 3]> = grid
        .occupancy()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 0.5)
        .map(|(i, _)| grid.coords(i).map(|c| c as f64 + 0.5))
        .collect();
    if points.is_empty() {
        return Err(GeometryError::EmptyGrid);
    }
    let labels = dbscan(&points, radius, min_points);
    let cluster_count = labels.iter().flatten().max().map_or(0, |&m| m + 1);
    let mut sizes = vec![0usize; cluster_count];
    for l in labels.iter().flatten() {
        sizes[*l] += 1;
    }
    let major = sizes.iter().copied().max().unwrap_or(0);
    let total = points.len();
    Ok(CompletenessReport {
        cluster_count,
        major_cluster_size: major,
        outlier_percentage: 100.0 * (total - major) as f64 / total as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fill_block(g: &mut VoxelGrid, lo: [usize; 3], size: [usize; 3]) {
        for z in lo[2]..lo[2] + size[2] {
            for y in lo[1]..lo[1] + size[1] {
                for x in lo[0]..lo[0] + size[0] {
                    g.set(x, y, z, 1.0);
                }
            }
        }
    }

    /// Largest 26-connected component by flood fill.
    fn largest_component(g: &VoxelGrid) -> usize {
        let r = g.resolution() as i64;
        let mut seen = vec![false; g.occupancy().len()];
        let mut best = 0;
        for start in 0..seen.len() {
            if seen[start] || g.occupancy()[start] <= 0.5 {
                continue;
            }
            seen[start] = true;
            let mut stack = vec![start];
            let mut size = 0;
            while let Some(i) = stack.pop() {
                size += 1;
                let [x, y, z] = g.coords(i).map(|c| c as i64);
                for dz in -1..=1 {
                    for dy in -1..=1 {
                        for dx in -1..=1 {
                            let (nx, ny, nz) = (x + dx, y + dy, z + dz);
                            if [nx, ny, nz].iter().any(|&c| c < 0 || c >= r) {
                                continue;
                            }
                            let j = g.index(nx as usize, ny as usize, nz as usize);
                            if !seen[j] && g.occupancy()[j] > 0.5 {
                                seen[j] = true;
                                stack.push(j);
                            }
                        }
                    }
                }
            }
            best = best.max(size);
        }
        best
    }

    #[test]
    fn single_block_has_no_outliers() {
        let mut g = VoxelGrid::unit(14);
        fill_block(&mut g, [2, 2, 2], [10, 10, 10]);
        let r = completeness(&g, DEFAULT_DBSCAN_RADIUS, DEFAULT_MIN_POINTS).unwrap();
        assert_eq!(r.cluster_count, 1);
        assert_eq!(r.major_cluster_size, 1000);
        assert_eq!(r.outlier_percentage, 0.0);
    }

    #[test]
    fn ninety_ten_split() {
        let mut g = VoxelGrid::unit(20);
        fill_block(&mut g, [1, 1, 1], [9, 5, 2]);
        fill_block(&mut g, [14, 14, 14], [5, 2, 1]);
        let r = completeness(&g, DEFAULT_DBSCAN_RADIUS, DEFAULT_MIN_POINTS).unwrap();
        assert_eq!(r.cluster_count, 2);
        assert_eq!(r.major_cluster_size, 90);
        assert!((r.outlier_percentage - 10.0).abs() < 1e-12);
    }

    #[test]
    fn isolated_voxels_are_noise() {
        let mut g = VoxelGrid::unit(10);
        fill_block(&mut g, [0, 0, 0], [3, 3, 3]);
        g.set(8, 8, 8, 1.0);
        let r = completeness(&g, DEFAULT_DBSCAN_RADIUS, DEFAULT_MIN_POINTS).unwrap();
        assert_eq!(r.cluster_count, 1);
        assert!((r.outlier_percentage - 100.0 / 28.0).abs() < 1e-12);
    }

    #[test]
    fn empty_grid_is_an_error() {
        assert!(matches!(
            completeness(&VoxelGrid::unit(4), 1.8, 4),
            Err(GeometryError::EmptyGrid)
        ));
    }

    #[test]
    fn matches_connected_component_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let mut g = VoxelGrid::unit(24);
            for _ in 0..rng.random_range(2..7) {
                let size = [0; 3].map(|_| rng.random_range(2..7));
                let lo = size.map(|s| rng.random_range(0..24 - s));
                fill_block(&mut g, lo, size);
            }
            let r = completeness(&g, DEFAULT_DBSCAN_RADIUS, DEFAULT_MIN_POINTS).unwrap();
            assert_eq!(r.major_cluster_size, largest_component(&g));
        }
    }

    proptest! {
        #[test]
        fn invariant_under_translation_and_permutation(
            blocks in proptest::collection::vec(((0usize..6, 0usize..6, 0usize..6), (2usize..4, 2usize..4, 2usize..4)), 1..5),
            shift in (0usize..4, 0usize..4, 0usize..4),
            perm in 0usize..6,
        ) {
            // unions of blocks at least 2 wide contain only core points, so
            // cluster membership does not depend on visiting order
            let mut a = VoxelGrid::unit(14);
            let mut b = VoxelGrid::unit(14);
            let orders = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
            let o = orders[perm];
            for &((x, y, z), (sx, sy, sz)) in &blocks {
                let lo = [x, y, z];
                let size = [sx, sy, sz];
                fill_block(&mut a, lo, size);
                fill_block(
                    &mut b,
                    [lo[o[0]] + shift.0, lo[o[1]] + shift.1, lo[o[2]] + shift.2],
                    [size[o[0]], size[o[1]], size[o[2]]],
                );
            }
            let ra = completeness(&a, DEFAULT_DBSCAN_RADIUS, DEFAULT_MIN_POINTS).unwrap();
            let rb = completeness(&b, DEFAULT_DBSCAN_RADIUS, DEFAULT_MIN_POINTS).unwrap();
            prop_assert_eq!(ra.major_cluster_size, rb.major_cluster_size);
            prop_assert_eq!(ra.outlier_percentage, rb.outlier_percentage);
        }
    }
}
