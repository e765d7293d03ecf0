use std::collections::VecDeque;

use log::warn;

use super::mesh::TriangleMesh;
use super::{GeometryError, Result, Vec3, VoxelGrid};

/// Fraction of the grid side spanned by the mesh's largest extent.
pub const FILL_FRACTION: f64 = 0.9;

#[derive(Clone, Debug, PartialEq)]
pub struct Voxelization {
    pub grid: VoxelGrid,
    /// Set when the mesh was not watertight and only its surface was marked.
    pub surface_only: bool,
}

/// Binary solid voxelization.
///
/// The mesh is uniformly scaled and centered so its largest bounding-box
/// extent spans [`FILL_FRACTION`] of the grid. Voxels overlapping a triangle
/// form the surface shell; non-shell voxels unreachable from the grid border
/// are interior. A shell voxel is kept when its center lies inside the mesh
/// (ray parity), which keeps the occupied volume unbiased.
pub fn voxelize(mesh: &TriangleMesh, resolution: usize) -> Result<Voxelization> {
    if mesh.is_empty() {
        return Err(GeometryError::EmptyMesh);
    }
    if resolution == 0 {
        return Err(GeometryError::InvalidArgument("resolution must be positive".into()));
    }
    let (lo, hi) = mesh.bounding_box().ok_or(GeometryError::EmptyMesh)?;
    let extent = (hi - lo).max();
    if extent <= 0.0 {
        return Err(GeometryError::InvalidMesh("mesh has zero extent".into()));
    }
    let voxel_size = extent / (FILL_FRACTION * resolution as f64);
    let center = (lo + hi) / 2.0;
    let origin = center - Vec3::repeat(resolution as f64 / 2.0 * voxel_size);
    let mut grid = VoxelGrid::new(resolution, origin, voxel_size)?;

    // triangles in voxel coordinates
    let tris: Vec<[Vec3; 3]> = (0..mesh.faces().len())
        .map(|f| mesh.triangle(f).map(|v| (v - origin) / voxel_size))
        .collect();
    let r = resolution;
    let mut shell = vec![false; r * r * r];
    for t in &tris {
        let tlo = t[0].inf(&t[1]).inf(&t[2]);
        let thi = t[0].sup(&t[1]).sup(&t[2]);
        let range = |a: f64, b: f64| {
            let s = (a.floor().max(0.0) as usize).min(r - 1);
            let e = (b.floor().max(0.0) as usize).min(r - 1);
            s..=e
        };
        for z in range(tlo.z, thi.z) {
            for y in range(tlo.y, thi.y) {
                for x in range(tlo.x, thi.x) {
                    let c = Vec3::new(x as f64 + 0.5, y as f64 + 0.5, z as f64 + 0.5);
                    if triangle_box_overlap(t, c, 0.5) {
                        shell[grid.index(x, y, z)] = true;
                    }
                }
            }
        }
    }

    if !mesh.is_watertight() {
        warn!("mesh is not watertight; voxelizing surface only");
        for (i, &s) in shell.iter().enumerate() {
            if s {
                let [x, y, z] = grid.coords(i);
                grid.set(x, y, z, 1.0);
            }
        }
        return Ok(Voxelization {
            grid,
            surface_only: true,
        });
    }

    let exterior = flood_exterior(&shell, r);
    let mut rows = RowParity::new(&tris);
    for i in 0..shell.len() {
        let [x, y, z] = grid.coords(i);
        let inside = if shell[i] {
            rows.inside(x, y, z)
        } else {
            !exterior[i]
        };
        if inside {
            grid.set(x, y, z, 1.0);
        }
    }
    Ok(Voxelization {
        grid,
        surface_only: false,
    })
}

/// 6-connected flood fill of non-shell voxels from the grid border.
fn flood_exterior(shell: &[bool], r: usize) -> Vec<bool> {
    let idx = |x: usize, y: usize, z: usize| x + r * (y + r * z);
    let mut ext = vec![false; shell.len()];
    let mut queue = VecDeque::new();
    for z in 0..r {
        for y in 0..r {
            for x in 0..r {
                let border = [x, y, z].iter().any(|&c| c == 0 || c == r - 1);
                let i = idx(x, y, z);
                if border && !shell[i] {
                    ext[i] = true;
                    queue.push_back((x, y, z));
                }
            }
        }
    }
    while let Some((x, y, z)) = queue.pop_front() {
        let neighbors = [
            (x.wrapping_sub(1), y, z),
            (x + 1, y, z),
            (x, y.wrapping_sub(1), z),
            (x, y + 1, z),
            (x, y, z.wrapping_sub(1)),
            (x, y, z + 1),
        ];
        for (nx, ny, nz) in neighbors {
            if nx >= r || ny >= r || nz >= r {
                continue;
            }
            let i = idx(nx, ny, nz);
            if !shell[i] && !ext[i] {
                ext[i] = true;
                queue.push_back((nx, ny, nz));
            }
        }
    }
    ext
}

/// Inside tests for voxel centers by crossing parity along +x, one row at a time.
struct RowParity<'a> {
    tris: &'a [[Vec3; 3]],
    row: Option<(usize, usize)>,
    crossings: Vec<f64>,
}

impl<'a> RowParity<'a> {
    // Offsets keep the probe line off triangle edges and vertices of
    // axis-aligned geometry.
    const DY: f64 = 1.234_567e-7;
    const DZ: f64 = 2.345_678e-7;

    fn new(tris: &'a [[Vec3; 3]]) -> Self {
        Self {
            tris,
            row: None,
            crossings: Vec::new(),
        }
    }

    fn inside(&mut self, x: usize, y: usize, z: usize) -> bool {
        if self.row != Some((y, z)) {
            self.row = Some((y, z));
            let py = y as f64 + 0.5 + Self::DY;
            let pz = z as f64 + 0.5 + Self::DZ;
            self.crossings.clear();
            for t in self.tris {
                if let Some(cx) = line_x_crossing(t, py, pz) {
                    self.crossings.push(cx);
                }
            }
        }
        let cx = x as f64 + 0.5;
        self.crossings.iter().filter(|&&c| c < cx).count() % 2 == 1
    }
}

/// Where the line `{(t, py, pz)}` crosses the triangle, if it does.
fn line_x_crossing(t: &[Vec3; 3], py: f64, pz: f64) -> Option<f64> {
    let (a, b, c) = (t[0], t[1], t[2]);
    let ymin = a.y.min(b.y).min(c.y);
    let ymax = a.y.max(b.y).max(c.y);
    let zmin = a.z.min(b.z).min(c.z);
    let zmax = a.z.max(b.z).max(c.z);
    if py < ymin || py > ymax || pz < zmin || pz > zmax {
        return None;
    }
    // barycentric coordinates of (py, pz) in the yz-projection
    let det = (b.y - a.y) * (c.z - a.z) - (c.y - a.y) * (b.z - a.z);
    if det.abs() < 1e-15 {
        return None;
    }
    let u = ((py - a.y) * (c.z - a.z) - (c.y - a.y) * (pz - a.z)) / det;
    let v = ((b.y - a.y) * (pz - a.z) - (py - a.y) * (b.z - a.z)) / det;
    if u < 0.0 || v < 0.0 || u + v > 1.0 {
        return None;
    }
    Some(a.x + u * (b.x - a.x) + v * (c.x - a.x))
}

/// Separating-axis test between a triangle and an axis-aligned cube.
pub(crate) fn triangle_box_overlap(t: &[Vec3; 3], center: Vec3, half: f64) -> bool {
    let v = [t[0] - center, t[1] - center, t[2] - center];
    let edges = [v[1] - v[0], v[2] - v[1], v[0] - v[2]];
    let mut axes: Vec<Vec3> = vec![Vec3::x(), Vec3::y(), Vec3::z(), edges[0].cross(&edges[1])];
    for e in &edges {
        for b in [Vec3::x(), Vec3::y(), Vec3::z()] {
            axes.push(e.cross(&b));
        }
    }
    for a in axes {
        if a.norm_squared() < 1e-24 {
            continue;
        }
        let p = [v[0].dot(&a), v[1].dot(&a), v[2].dot(&a)];
        let r = half * (a.x.abs() + a.y.abs() + a.z.abs());
        let lo = p[0].min(p[1]).min(p[2]);
        let hi = p[0].max(p[1]).max(p[2]);
        if lo > r || hi < -r {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::super::shapes;
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn empty_mesh_is_an_error() {
        assert!(matches!(
            voxelize(&TriangleMesh::empty(), 16),
            Err(GeometryError::EmptyMesh)
        ));
    }

    #[test]
    fn cube_fills_its_scaled_extent() {
        // at resolution 40 the cube spans 36 voxels with faces on voxel boundaries
        let v = voxelize(&shapes::cuboid(Vec3::repeat(0.1)), 40).unwrap();
        assert!(!v.surface_only);
        let analytic = (FILL_FRACTION * 40.0f64).powi(3);
        let count = v.grid.occupied_count() as f64;
        assert!((count - analytic).abs() / analytic < 0.02, "{count} vs {analytic}");
        for z in 2..38 {
            for y in 2..38 {
                for x in 2..38 {
                    assert_eq!(v.grid.get(x, y, z), 1.0);
                }
            }
        }
    }

    #[test]
    fn sphere_volume_within_five_percent() {
        let radius = 0.05;
        let sphere = shapes::uv_sphere(radius, 96, 192);
        let v = voxelize(&sphere, 64).unwrap();
        let cell = v.grid.voxel_size().powi(3);
        let analytic = 4.0 / 3.0 * PI * radius.powi(3) / cell;
        let count = v.grid.occupied_count() as f64;
        assert!((count - analytic).abs() / analytic < 0.05);
    }

    #[test]
    fn sphere_error_shrinks_with_resolution() {
        let radius = 0.05;
        let sphere = shapes::uv_sphere(radius, 96, 192);
        let err = |res| {
            let g = voxelize(&sphere, res).unwrap().grid;
            let frac = g.occupied_count() as f64 / (res * res * res) as f64;
            let ext = 2.0 * radius;
            let side = ext / FILL_FRACTION;
            let analytic = 4.0 / 3.0 * PI * radius.powi(3) / side.powi(3);
            (frac - analytic).abs()
        };
        assert!(err(64) <= err(32));
    }

    #[test]
    fn open_mesh_is_surface_only() {
        let patch = shapes::planar_grid(4, 1.0);
        let v = voxelize(&patch, 8).unwrap();
        assert!(v.surface_only);
        assert!(v.grid.occupied_count() > 0);
    }

    #[test]
    fn grid_contains_mesh_bounds() {
        let m = shapes::l_prism(0.08, 0.05, 0.02, 0.03);
        let v = voxelize(&m, 16).unwrap();
        let (lo, hi) = m.bounding_box().unwrap();
        let g = &v.grid;
        let gmax = g.origin() + Vec3::repeat(g.resolution() as f64 * g.voxel_size());
        assert!(lo.iter().zip(g.origin().iter()).all(|(a, b)| a >= b));
        assert!(hi.iter().zip(gmax.iter()).all(|(a, b)| a <= b));
    }

    #[test]
    fn box_overlap_basic() {
        let t = [Vec3::new(-1.0, -1.0, 0.2), Vec3::new(2.0, -1.0, 0.2), Vec3::new(0.0, 2.0, 0.2)];
        assert!(triangle_box_overlap(&t, Vec3::zeros(), 0.5));
        assert!(!triangle_box_overlap(&t, Vec3::new(0.0, 0.0, 1.0), 0.5));
    }
}
