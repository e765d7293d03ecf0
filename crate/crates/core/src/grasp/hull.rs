//! Convex hulls of small point sets in six dimensions, built incrementally
//! (beneath-beyond). Only what the epsilon quality metric needs is kept: the
//! facet hyperplanes.

use std::collections::HashMap;

use nalgebra::{SMatrix, SVector};

pub type Wrench = SVector<f64, 6>;

const D: usize = 6;

/// Outward unit normal `n` and offset `b`: the hull lies in `n·x ≤ b`.
#[derive(Clone, Debug)]
pub struct Facet {
    pub vertices: [usize; D],
    pub normal: Wrench,
    pub offset: f64,
}

/// Facets of the convex hull of `points`, or `None` when the points do not
/// span six dimensions (relative tolerance `1e-9`).
pub fn convex_hull(points: &[Wrench]) -> Option<Vec<Facet>> {
    let scale = points.iter().map(|p| p.amax()).fold(0.0, f64::max);
    if scale == 0.0 {
        return None;
    }
    let eps = 1e-9 * scale;
    let simplex = initial_simplex(points, eps)?;
    let interior = simplex.iter().map(|&i| points[i]).sum::<Wrench>() / (D + 1) as f64;

    let mut facets = Vec::with_capacity(64);
    for skip in 0..=D {
        let verts: Vec<usize> = simplex
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != skip)
            .map(|(_, &v)| v)
            .collect();
        facets.push(facet(points, &verts, &interior)?);
    }

    for (i, p) in points.iter().enumerate() {
        if simplex.contains(&i) {
            continue;
        }
        let visible: Vec<bool> = facets
            .iter()
            .map(|f| f.normal.dot(p) - f.offset > eps)
            .collect();
        if !visible.iter().any(|&v| v) {
            continue;
        }
        // ridges seen once among the visible facets bound the visible region
        let mut ridges: HashMap<[usize; D - 1], usize> = HashMap::new();
        for (f, _) in facets.iter().zip(&visible).filter(|(_, &v)| v) {
            for skip in 0..D {
                *ridges.entry(ridge(&f.vertices, skip)).or_insert(0) += 1;
            }
        }
        let mut horizon: Vec<[usize; D - 1]> = ridges
            .into_iter()
            .filter(|&(_, c)| c == 1)
            .map(|(r, _)| r)
            .collect();
        horizon.sort_unstable();
        let mut kept: Vec<Facet> = facets
            .into_iter()
            .zip(visible)
            .filter(|(_, v)| !v)
            .map(|(f, _)| f)
            .collect();
        for r in horizon {
            let mut verts = r.to_vec();
            verts.push(i);
            if let Some(f) = facet(points, &verts, &interior) {
                kept.push(f);
            }
        }
        facets = kept;
    }
    Some(facets)
}

fn ridge(vertices: &[usize; D], skip: usize) -> [usize; D - 1] {
    let mut out = [0; D - 1];
    let mut k = 0;
    for (j, &v) in vertices.iter().enumerate() {
        if j != skip {
            out[k] = v;
            k += 1;
        }
    }
    out
}

/// Hyperplane through six points, oriented away from `interior`.
fn facet(points: &[Wrench], verts: &[usize], interior: &Wrench) -> Option<Facet> {
    let mut sorted: [usize; D] = verts.try_into().ok()?;
    sorted.sort_unstable();
    let base = points[sorted[0]];
    let mut rows = SMatrix::<f64, 5, 6>::zeros();
    for j in 1..D {
        rows.set_row(j - 1, &(points[sorted[j]] - base).transpose());
    }
    // generalized cross product: signed 5×5 minors
    let mut normal = Wrench::zeros();
    for c in 0..D {
        let mut minor = SMatrix::<f64, 5, 5>::zeros();
        for (k, col) in (0..D).filter(|&x| x != c).enumerate() {
            minor.set_column(k, &rows.column(col));
        }
        let sign = if c % 2 == 0 { 1.0 } else { -1.0 };
        normal[c] = sign * minor.determinant();
    }
    let len = normal.norm();
    if !(len > 0.0) || !len.is_finite() {
        return None;
    }
    normal /= len;
    let mut offset = normal.dot(&base);
    if normal.dot(interior) > offset {
        normal = -normal;
        offset = -offset;
    }
    Some(Facet {
        vertices: sorted,
        normal,
        offset,
    })
}

/// Seven affinely independent points, picked greedily by distance to the
/// span of those already chosen.
fn initial_simplex(points: &[Wrench], eps: f64) -> Option<[usize; D + 1]> {
    let mut chosen = vec![0usize];
    let mut basis: Vec<Wrench> = Vec::new();
    let origin = points[0];
    while chosen.len() < D + 1 {
        let residual = |p: &Wrench| {
            let mut r = p - origin;
            for b in &basis {
                r -= b * b.dot(&r);
            }
            r
        };
        let (best, dist) = points
            .iter()
            .enumerate()
            .map(|(i, p)| (i, residual(p).norm()))
            .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if dist <= eps {
            return None;
        }
        let r = residual(&points[best]);
        basis.push(r / r.norm());
        chosen.push(best);
    }
    chosen.try_into().ok()
}

/// Distance from the origin to the hull boundary; zero when the origin is not
/// strictly inside or the points span fewer than six dimensions.
pub fn origin_depth(points: &[Wrench]) -> f64 {
    let Some(facets) = convex_hull(points) else {
        return 0.0;
    };
    let scale = points.iter().map(|p| p.amax()).fold(0.0, f64::max);
    let depth = facets.iter().map(|f| f.offset).fold(f64::INFINITY, f64::min);
    if depth > 1e-12 * scale {
        depth
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit(i: usize) -> Wrench {
        let mut w = Wrench::zeros();
        w[i] = 1.0;
        w
    }

    /// Offsets of every 6-subset hyperplane with all points on one side.
    pub(crate) fn brute_force_depth(points: &[Wrench]) -> f64 {
        let n = points.len();
        let interior = points.iter().sum::<Wrench>() / n as f64;
        let mut best = f64::INFINITY;
        let mut idx = [0usize; D];
        fn rec(
            start: usize,
            depth: usize,
            idx: &mut [usize; D],
            points: &[Wrench],
            interior: &Wrench,
            best: &mut f64,
        ) {
            if depth == D {
                if let Some(f) = facet(points, idx, interior) {
                    if points.iter().all(|p| f.normal.dot(p) <= f.offset + 1e-9) {
                        *best = best.min(f.offset);
                    }
                }
                return;
            }
            for i in start..points.len() {
                idx[depth] = i;
                rec(i + 1, depth + 1, idx, points, interior, best);
            }
        }
        rec(0, 0, &mut idx, points, &interior, &mut best);
        best.max(0.0)
    }

    #[test]
    fn cross_polytope_depth() {
        let pts: Vec<Wrench> = (0..6).flat_map(|i| [unit(i), -unit(i)]).collect();
        let q = origin_depth(&pts);
        assert!((q - 1.0 / 6f64.sqrt()).abs() < 1e-12);
        let facets = convex_hull(&pts).unwrap();
        assert_eq!(facets.len(), 64);
    }

    #[test]
    fn hypercube_depth() {
        let pts: Vec<Wrench> = (0..64)
            .map(|m| Wrench::from_fn(|i, _| if m >> i & 1 == 1 { 2.0 } else { -2.0 }))
            .collect();
        assert!((origin_depth(&pts) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn origin_outside_gives_zero() {
        let pts: Vec<Wrench> = (0..6)
            .flat_map(|i| [unit(i) + Wrench::repeat(3.0), -unit(i) + Wrench::repeat(3.0)])
            .collect();
        assert_eq!(origin_depth(&pts), 0.0);
    }

    #[test]
    fn low_rank_gives_zero() {
        let pts: Vec<Wrench> = (0..5).flat_map(|i| [unit(i), -unit(i)]).collect();
        assert!(convex_hull(&pts).is_none());
        assert_eq!(origin_depth(&pts), 0.0);
    }

    #[test]
    fn matches_brute_force_on_random_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..15 {
            let n = rng.random_range(8..14);
            let pts: Vec<Wrench> = (0..n)
                .map(|_| Wrench::from_fn(|_, _| rng.random_range(-1.0..1.0)))
                .collect();
            let a = origin_depth(&pts);
            let b = brute_force_depth(&pts);
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn every_point_is_inside_every_facet() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts: Vec<Wrench> = (0..30)
            .map(|_| Wrench::from_fn(|_, _| rng.random_range(-1.0..1.0)))
            .collect();
        for f in convex_hull(&pts).unwrap() {
            for p in &pts {
                assert!(f.normal.dot(p) <= f.offset + 1e-9);
            }
        }
    }
}
