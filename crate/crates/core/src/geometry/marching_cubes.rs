//! Marching cubes over voxel centers.
//!
//! Instead of a fixed 256-case lookup table, each cube's polygons are derived
//! from its faces: on every cube face the iso-crossings are paired into
//! segments (ambiguous faces use the face-average decider), the segments are
//! chained into closed loops, and each loop is triangulated. Because a face's
//! segments depend only on the four values of that face, neighbouring cubes
//! agree on the shared boundary and the output is closed wherever the field
//! is below the iso-level on the grid border. Loops longer than three get a
//! center vertex and a triangle fan, so no interior edge can coincide with an
//! edge of a neighbouring cube.

use std::collections::HashMap;
use std::sync::OnceLock;

use super::{GeometryError, Result, TriangleMesh, Vec3, VoxelGrid};

const CORNERS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [0, 1, 0],
    [1, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [0, 1, 1],
    [1, 1, 1],
];

struct CubeTopology {
    /// Corner pairs `(a, b)` with `a` the lower corner; `axis` is the bit flipped.
    edges: Vec<(usize, usize, usize)>,
    /// Per face: corners counter-clockwise seen from outside, and the edge
    /// between consecutive corners.
    faces: Vec<([usize; 4], [usize; 4])>,
}

fn topology() -> &'static CubeTopology {
    static TOPO: OnceLock<CubeTopology> = OnceLock::new();
    TOPO.get_or_init(|| {
        let mut edges = Vec::new();
        for axis in 0..3 {
            let bit = 1 << axis;
            for a in 0..8 {
                if a & bit == 0 {
                    edges.push((a, a | bit, axis));
                }
            }
        }
        let edge_of = |a: usize, b: usize| {
            edges
                .iter()
                .position(|&(p, q, _)| (p, q) == (a.min(b), a.max(b)))
                .expect("adjacent corners")
        };
        let mut faces = Vec::new();
        for axis in 0..3 {
            let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
            for side in 0..2 {
                let corner = |du: usize, dv: usize| {
                    (side << axis) | (du << u) | (dv << v)
                };
                let mut ring = [corner(0, 0), corner(1, 0), corner(1, 1), corner(0, 1)];
                let p = |c: usize| {
                    Vec3::new(
                        CORNERS[c][0] as f64,
                        CORNERS[c][1] as f64,
                        CORNERS[c][2] as f64,
                    )
                };
                let n = (p(ring[1]) - p(ring[0])).cross(&(p(ring[2]) - p(ring[1])));
                let outward = if side == 1 { 1.0 } else { -1.0 };
                if n[axis] * outward < 0.0 {
                    ring.reverse();
                }
                let sides = [
                    edge_of(ring[0], ring[1]),
                    edge_of(ring[1], ring[2]),
                    edge_of(ring[2], ring[3]),
                    edge_of(ring[3], ring[0]),
                ];
                faces.push((ring, sides));
            }
        }
        CubeTopology { edges, faces }
    })
}

/// Extracts the `iso_level` surface of the occupancy field sampled at voxel
/// centers. A sample is inside when its value exceeds the level; triangles
/// face from inside to outside.
pub fn marching_cubes(grid: &VoxelGrid, iso_level: f64) -> Result<TriangleMesh> {
    let r = grid.resolution();
    if r < 2 {
        return Err(GeometryError::InvalidArgument(
            "marching cubes needs resolution of at least 2".into(),
        ));
    }
    if !(iso_level > 0.0 && iso_level < 1.0) {
        return Err(GeometryError::InvalidArgument(format!(
            "iso level {iso_level} outside (0, 1)"
        )));
    }
    let topo = topology();
    let occ = grid.occupancy();
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    let mut edge_vertex: HashMap<usize, usize> = HashMap::new();

    for z in 0..r - 1 {
        for y in 0..r - 1 {
            for x in 0..r - 1 {
                let mut values = [0.0; 8];
                let mut inside = [false; 8];
                for (c, o) in CORNERS.iter().enumerate() {
                    values[c] = occ[grid.index(x + o[0], y + o[1], z + o[2])];
                    inside[c] = values[c] > iso_level;
                }
                if inside.iter().all(|&b| b) || inside.iter().all(|&b| !b) {
                    continue;
                }

                let mut next: [Option<usize>; 12] = [None; 12];
                for (ring, sides) in &topo.faces {
                    let mut crossings: Vec<(usize, bool)> = Vec::with_capacity(4);
                    for j in 0..4 {
                        let (a, b) = (ring[j], ring[(j + 1) % 4]);
                        if inside[a] != inside[b] {
                            crossings.push((sides[j], inside[a]));
                        }
                    }
                    match crossings.len() {
                        0 => {}
                        2 => {
                            let (exit, entry) = if crossings[0].1 {
                                (crossings[0].0, crossings[1].0)
                            } else {
                                (crossings[1].0, crossings[0].0)
                            };
                            next[exit] = Some(entry);
                        }
                        4 => {
                            let mean = ring.iter().map(|&c| values[c]).sum::<f64>() / 4.0;
                            let join = mean > iso_level;
                            for i in 0..4 {
                                let (edge, is_exit) = crossings[i];
                                if is_exit {
                                    let partner = if join { (i + 1) % 4 } else { (i + 3) % 4 };
                                    next[edge] = Some(crossings[partner].0);
                                }
                            }
                        }
                        _ => unreachable!("a square has an even number of sign changes"),
                    }
                }

                let mut visited = [false; 12];
                let mut loops: Vec<Vec<usize>> = Vec::new();
                for start in 0..12 {
                    if next[start].is_none() || visited[start] {
                        continue;
                    }
                    let mut ring = Vec::new();
                    let mut e = start;
                    while !visited[e] {
                        visited[e] = true;
                        ring.push(e);
                        e = next[e].expect("crossing loops are closed");
                    }
                    loops.push(ring);
                }

                for edges in loops {
                    let ring: Vec<usize> = edges
                        .iter()
                        .map(|&edge| {
                            let (a, b, axis) = topo.edges[edge];
                            let base = [x + CORNERS[a][0], y + CORNERS[a][1], z + CORNERS[a][2]];
                            let key = grid.index(base[0], base[1], base[2]) * 3 + axis;
                            *edge_vertex.entry(key).or_insert_with(|| {
                                let (va, vb) = (values[a], values[b]);
                                let t = ((iso_level - va) / (vb - va)).clamp(0.0, 1.0);
                                let mut step = Vec3::zeros();
                                step[axis] = grid.voxel_size();
                                vertices.push(grid.voxel_center(base[0], base[1], base[2]) + step * t);
                                vertices.len() - 1
                            })
                        })
                        .collect();
                    // loops run inside-on-the-left seen from outside the cube,
                    // i.e. their right-hand normal points inward: emit reversed
                    if ring.len() == 3 {
                        faces.push([ring[0], ring[2], ring[1]]);
                    } else {
                        let center =
                            ring.iter().map(|&i| vertices[i]).sum::<Vec3>() / ring.len() as f64;
                        vertices.push(center);
                        let c = vertices.len() - 1;
                        for i in 0..ring.len() {
                            faces.push([c, ring[(i + 1) % ring.len()], ring[i]]);
                        }
                    }
                }
            }
        }
    }
    TriangleMesh::new(vertices, faces)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn ball(res: usize, radius: f64) -> VoxelGrid {
        let mut g = VoxelGrid::unit(res);
        let c = res as f64 / 2.0;
        for z in 0..res {
            for y in 0..res {
                for x in 0..res {
                    let p = Vec3::new(x as f64 + 0.5, y as f64 + 0.5, z as f64 + 0.5);
                    if (p - Vec3::repeat(c)).norm() <= radius {
                        g.set(x, y, z, 1.0);
                    }
                }
            }
        }
        g
    }

    #[test]
    fn empty_and_full_grids_give_empty_mesh() {
        let g = VoxelGrid::unit(4);
        assert!(marching_cubes(&g, 0.5).unwrap().is_empty());
        let full = VoxelGrid::from_occupancy(4, Vec3::zeros(), 1.0, vec![1.0; 64]).unwrap();
        assert!(marching_cubes(&full, 0.5).unwrap().is_empty());
    }

    #[test]
    fn resolution_one_is_rejected() {
        assert!(marching_cubes(&VoxelGrid::unit(1), 0.5).is_err());
    }

    #[test]
    fn single_voxel_is_closed() {
        let mut g = VoxelGrid::unit(3);
        g.set(1, 1, 1, 1.0);
        let m = marching_cubes(&g, 0.5).unwrap();
        assert!(!m.is_empty());
        assert!(m.is_watertight());
        assert!(m.is_consistently_oriented());
        assert!(m.signed_volume() > 0.0);
    }

    #[test]
    fn sphere_area_and_volume() {
        let r = 20.0;
        let m = marching_cubes(&ball(48, r), 0.5).unwrap();
        assert!(m.is_watertight());
        assert!(m.is_consistently_oriented());
        let area = 4.0 * PI * r * r;
        let volume = 4.0 / 3.0 * PI * r.powi(3);
        assert!((m.surface_area() - area).abs() / area < 0.10, "area {}", m.surface_area());
        assert!((m.signed_volume() - volume).abs() / volume < 0.05);
    }

    #[test]
    fn random_boundary_clear_grids_are_watertight() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for trial in 0..40 {
            let res = 7;
            let mut g = VoxelGrid::unit(res);
            let p = rng.random_range(0.2..0.7);
            for z in 1..res - 1 {
                for y in 1..res - 1 {
                    for x in 1..res - 1 {
                        if rng.random_bool(p) {
                            g.set(x, y, z, 1.0);
                        }
                    }
                }
            }
            let m = marching_cubes(&g, 0.5).unwrap();
            if m.is_empty() {
                continue;
            }
            assert!(m.is_watertight(), "trial {trial}");
            assert!(m.is_consistently_oriented(), "trial {trial}");
        }
    }

    #[test]
    fn real_valued_field_is_watertight() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let res = 8;
        let mut g = VoxelGrid::unit(res);
        for z in 1..res - 1 {
            for y in 1..res - 1 {
                for x in 1..res - 1 {
                    g.set(x, y, z, rng.random_range(0.0..1.0));
                }
            }
        }
        let m = marching_cubes(&g, 0.5).unwrap();
        assert!(m.is_watertight());
        assert!(m.is_consistently_oriented());
    }
}
