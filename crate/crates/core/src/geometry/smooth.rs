use super::{TriangleMesh, Vec3};

/// Weight of the original positions in the pull-back target.
pub const HC_ALPHA: f64 = 0.0;
/// Weight of a vertex's own correction against its neighbours'.
pub const HC_BETA: f64 = 0.5;

/// HC-Laplacian smoothing with the default weights. Boundary vertices stay fixed.
pub fn smooth_mesh(mesh: &TriangleMesh, iterations: usize) -> TriangleMesh {
    hc_smooth(mesh, iterations, HC_ALPHA, HC_BETA)
}

/// HC-Laplacian smoothing: an umbrella step followed by pushing each vertex
/// back by a blend of its own and its neighbours' displacement.
pub fn hc_smooth(mesh: &TriangleMesh, iterations: usize, alpha: f64, beta: f64) -> TriangleMesh {
    let neighbors = mesh.vertex_neighbors();
    let fixed = mesh.boundary_vertices();
    let original = mesh.vertices().to_vec();
    let mut q = original.clone();
    let mut p = original.clone();
    let mut b = vec![Vec3::zeros(); q.len()];
    for _ in 0..iterations {
        for i in 0..q.len() {
            let adj = &neighbors[i];
            p[i] = if fixed[i] || adj.is_empty() {
                q[i]
            } else {
                adj.iter().map(|&j| q[j]).sum::<Vec3>() / adj.len() as f64
            };
            b[i] = p[i] - (original[i] * alpha + q[i] * (1.0 - alpha));
        }
        for i in 0..q.len() {
            let adj = &neighbors[i];
            if fixed[i] || adj.is_empty() {
                continue;
            }
            let mean_b = adj.iter().map(|&j| b[j]).sum::<Vec3>() / adj.len() as f64;
            p[i] -= b[i] * beta + mean_b * (1.0 - beta);
        }
        std::mem::swap(&mut p, &mut q);
    }
    let mut out = mesh.clone();
    out.vertices_mut().copy_from_slice(&q);
    out
}

#[cfg(test)]
mod tests {
    use super::super::{marching_cubes, shapes, VoxelGrid};
    use super::*;

    fn mc_sphere() -> TriangleMesh {
        let res = 40;
        let mut g = VoxelGrid::unit(res);
        let c = Vec3::repeat(res as f64 / 2.0);
        for i in 0..res * res * res {
            let [x, y, z] = g.coords(i);
            if (g.voxel_center(x, y, z) - c).norm() <= 15.0 {
                g.set(x, y, z, 1.0);
            }
        }
        marching_cubes(&g, 0.5).unwrap()
    }

    /// Plain umbrella smoothing, for contrast.
    fn laplacian(mesh: &TriangleMesh, iterations: usize) -> TriangleMesh {
        let nb = mesh.vertex_neighbors();
        let mut v = mesh.vertices().to_vec();
        for _ in 0..iterations {
            v = (0..v.len())
                .map(|i| nb[i].iter().map(|&j| v[j]).sum::<Vec3>() / nb[i].len() as f64)
                .collect();
        }
        let mut out = mesh.clone();
        out.vertices_mut().copy_from_slice(&v);
        out
    }

    #[test]
    fn planar_grid_is_a_fixed_point() {
        let m = shapes::planar_grid(6, 1.0);
        let s = smooth_mesh(&m, 10);
        for (a, b) in m.vertices().iter().zip(s.vertices()) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn zero_iterations_is_identity() {
        let m = shapes::uv_sphere(1.0, 8, 12);
        assert_eq!(smooth_mesh(&m, 0), m);
    }

    #[test]
    fn sphere_shrinks_less_than_five_percent() {
        let m = mc_sphere();
        let v0 = m.signed_volume();
        let s = smooth_mesh(&m, 10);
        assert_eq!(s.vertices().len(), m.vertices().len());
        assert_eq!(s.faces(), m.faces());
        let shrink = (v0 - s.signed_volume()) / v0;
        assert!(shrink.abs() < 0.05, "shrink {shrink}");
        let plain = (v0 - laplacian(&m, 10).signed_volume()) / v0;
        assert!(plain > shrink.abs());
    }

    #[test]
    fn smoothing_reduces_roughness() {
        let m = mc_sphere();
        let c = Vec3::repeat(20.0);
        let spread = |mesh: &TriangleMesh| {
            let d: Vec<f64> = mesh.vertices().iter().map(|v| (v - c).norm()).collect();
            let mean = d.iter().sum::<f64>() / d.len() as f64;
            d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / d.len() as f64
        };
        assert!(spread(&smooth_mesh(&m, 10)) < spread(&m));
    }
}
