//! Procedural watertight meshes, centered at the origin with outward faces.

use std::f64::consts::PI;

use super::{TriangleMesh, Vec3};

fn build(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> TriangleMesh {
    TriangleMesh::new(vertices, faces)
        .expect("procedural mesh is valid")
        .oriented_outward()
}

pub fn tetrahedron(size: f64) -> TriangleMesh {
    let s = size;
    let vertices = vec![
        Vec3::new(s, s, s),
        Vec3::new(s, -s, -s),
        Vec3::new(-s, s, -s),
        Vec3::new(-s, -s, s),
    ];
    build(vertices, vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])
}

/// Axis-aligned box with the given full side lengths.
pub fn cuboid(size: Vec3) -> TriangleMesh {
    let h = size / 2.0;
    let polygon = [
        (-h.x, -h.y),
        (h.x, -h.y),
        (h.x, h.y),
        (-h.x, h.y),
    ];
    extrude(&polygon, &[[0, 1, 2], [0, 2, 3]], size.z)
}

/// Latitude/longitude sphere with `stacks` bands and `slices` meridians.
pub fn uv_sphere(radius: f64, stacks: usize, slices: usize) -> TriangleMesh {
    capsule(radius, 0.0, stacks, slices)
}

/// Cylinder along z with a straight section of `length` capped by hemispheres.
///
/// `stacks` must be even so the equator splits the two caps.
pub fn capsule(radius: f64, length: f64, stacks: usize, slices: usize) -> TriangleMesh {
    let stacks = stacks.max(2) + stacks % 2;
    let slices = slices.max(3);
    let mut vertices = vec![Vec3::new(0.0, 0.0, radius + length / 2.0)];
    let mut rings = Vec::new();
    for i in 1..stacks {
        let theta = PI * i as f64 / stacks as f64;
        let z = radius * theta.cos();
        let r = radius * theta.sin();
        let mut push_ring = |offset: f64| {
            let start = vertices.len();
            for j in 0..slices {
                let phi = 2.0 * PI * j as f64 / slices as f64;
                vertices.push(Vec3::new(r * phi.cos(), r * phi.sin(), z + offset));
            }
            rings.push(start);
        };
        if i * 2 == stacks && length > 0.0 {
            push_ring(length / 2.0);
            push_ring(-length / 2.0);
        } else {
            push_ring(if i * 2 < stacks { length / 2.0 } else { -length / 2.0 });
        }
    }
    let south = vertices.len();
    vertices.push(Vec3::new(0.0, 0.0, -radius - length / 2.0));

    let mut faces = Vec::new();
    for j in 0..slices {
        let k = (j + 1) % slices;
        faces.push([0, rings[0] + j, rings[0] + k]);
    }
    for w in rings.windows(2) {
        let (a, b) = (w[0], w[1]);
        for j in 0..slices {
            let k = (j + 1) % slices;
            faces.push([a + j, b + j, b + k]);
            faces.push([a + j, b + k, a + k]);
        }
    }
    let last = *rings.last().unwrap();
    for j in 0..slices {
        let k = (j + 1) % slices;
        faces.push([south, last + k, last + j]);
    }
    build(vertices, faces)
}

pub fn cylinder(radius: f64, height: f64, segments: usize) -> TriangleMesh {
    let segments = segments.max(3);
    let polygon: Vec<(f64, f64)> = (0..segments)
        .map(|j| {
            let phi = 2.0 * PI * j as f64 / segments as f64;
            (radius * phi.cos(), radius * phi.sin())
        })
        .collect();
    let fan: Vec<[usize; 3]> = (1..segments - 1).map(|j| [0, j, j + 1]).collect();
    extrude(&polygon, &fan, height)
}

/// L-shaped prism: legs `a` (x) and `b` (y) of thickness `t`, extruded `depth` in z.
pub fn l_prism(a: f64, b: f64, t: f64, depth: f64) -> TriangleMesh {
    let polygon = [(0.0, 0.0), (a, 0.0), (a, t), (t, t), (t, b), (0.0, b)];
    let tris = [[0, 1, 2], [0, 2, 3], [0, 3, 4], [0, 4, 5]];
    let m = extrude(&polygon, &tris, depth);
    let c = m.centroid();
    m.translated(-c)
}

/// Prism over a counter-clockwise polygon and its triangulation.
pub fn extrude(polygon: &[(f64, f64)], triangles: &[[usize; 3]], depth: f64) -> TriangleMesh {
    let n = polygon.len();
    let z0 = -depth / 2.0;
    let z1 = depth / 2.0;
    let mut vertices: Vec<Vec3> = polygon.iter().map(|&(x, y)| Vec3::new(x, y, z0)).collect();
    vertices.extend(polygon.iter().map(|&(x, y)| Vec3::new(x, y, z1)));
    let mut faces = Vec::new();
    for t in triangles {
        faces.push([t[0], t[2], t[1]]);
        faces.push([n + t[0], n + t[1], n + t[2]]);
    }
    for i in 0..n {
        let j = (i + 1) % n;
        faces.push([i, j, n + j]);
        faces.push([i, n + j, n + i]);
    }
    build(vertices, faces)
}

/// Flat `cells × cells` grid in the z = 0 plane (an open mesh), side `size`.
pub fn planar_grid(cells: usize, size: f64) -> TriangleMesh {
    let n = cells + 1;
    let step = size / cells as f64;
    let mut vertices = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            vertices.push(Vec3::new(i as f64 * step, j as f64 * step, 0.0));
        }
    }
    let mut faces = Vec::new();
    for j in 0..cells {
        for i in 0..cells {
            let a = j * n + i;
            faces.push([a, a + 1, a + n + 1]);
            faces.push([a, a + n + 1, a + n]);
        }
    }
    TriangleMesh::new(vertices, faces).expect("grid is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_shapes_closed_and_outward() {
        let meshes = [
            tetrahedron(1.0),
            cuboid(Vec3::new(0.1, 0.02, 0.05)),
            uv_sphere(0.04, 16, 24),
            capsule(0.02, 0.05, 12, 16),
            cylinder(0.03, 0.08, 20),
            l_prism(0.08, 0.06, 0.02, 0.03),
        ];
        for m in &meshes {
            assert!(m.is_watertight());
            assert!(m.is_consistently_oriented());
            assert!(m.signed_volume() > 0.0);
        }
    }

    #[test]
    fn analytic_volumes() {
        let l = l_prism(0.08, 0.06, 0.02, 0.03);
        let expected = (0.08 * 0.02 + 0.02 * 0.04) * 0.03;
        assert!((l.signed_volume() - expected).abs() < 1e-12);
        let s = uv_sphere(1.0, 64, 128);
        let v = 4.0 / 3.0 * PI;
        assert!((s.signed_volume() - v).abs() / v < 0.01);
        let c = capsule(1.0, 2.0, 64, 128);
        let v = 4.0 / 3.0 * PI + PI * 2.0;
        assert!((c.signed_volume() - v).abs() / v < 0.01);
    }
}
