use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{GeometryError, Result, Vec3};

/// Indexed triangle mesh, coordinates in meters.
#[derive(Clone, Debug, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RayHit {
    pub t: f64,
    pub point: Vec3,
    pub face: usize,
}

impl TriangleMesh {
    /// Validates face indices and rejects faces that repeat a vertex.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        for (i, f) in faces.iter().enumerate() {
            if f.iter().any(|&v| v >= vertices.len()) {
                return Err(GeometryError::InvalidMesh(format!(
                    "face {i} {f:?} references a vertex beyond {}",
                    vertices.len()
                )));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(GeometryError::InvalidMesh(format!(
                    "face {i} {f:?} is degenerate"
                )));
            }
        }
        if vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(GeometryError::InvalidMesh("non-finite vertex".into()));
        }
        Ok(Self { vertices, faces })
    }

    pub fn empty() -> Self {
        Self {
            vertices: Vec::new(),
            faces: Vec::new(),
        }
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub(crate) fn vertices_mut(&mut self) -> &mut [Vec3] {
        &mut self.vertices
    }

    pub fn triangle(&self, face: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[face];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn bounding_box(&self) -> Option<(Vec3, Vec3)> {
        let first = *self.vertices.first()?;
        Some(self.vertices.iter().fold((first, first), |(lo, hi), v| {
            (lo.inf(v), hi.sup(v))
        }))
    }

    /// Largest side of the axis-aligned bounding box.
    pub fn max_extent(&self) -> f64 {
        self.bounding_box()
            .map(|(lo, hi)| (hi - lo).max())
            .unwrap_or(0.0)
    }

    /// Every undirected edge borders exactly two faces.
    pub fn is_watertight(&self) -> bool {
        if self.faces.is_empty() {
            return false;
        }
        let mut counts: HashMap<(usize, usize), u32> = HashMap::new();
        for f in &self.faces {
            for (a, b) in face_edges(f) {
                *counts.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        counts.values().all(|&c| c == 2)
    }

    /// Watertight and every directed edge appears once, its reverse once.
    pub fn is_consistently_oriented(&self) -> bool {
        if !self.is_watertight() {
            return false;
        }
        let mut directed: HashMap<(usize, usize), u32> = HashMap::new();
        for f in &self.faces {
            for e in face_edges(f) {
                *directed.entry(e).or_default() += 1;
            }
        }
        directed
            .iter()
            .all(|(&(a, b), &c)| c == 1 && directed.get(&(b, a)) == Some(&1))
    }

    pub fn face_normal(&self, face: usize) -> Vec3 {
        let [a, b, c] = self.triangle(face);
        (b - a).cross(&(c - a)).normalize()
    }

    pub fn face_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.triangle(face);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Signed enclosed volume; positive for outward-facing orientation.
    pub fn signed_volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|&[a, b, c]| {
                let (a, b, c) = (self.vertices[a], self.vertices[b], self.vertices[c]);
                a.dot(&b.cross(&c))
            })
            .sum::<f64>()
            / 6.0
    }

    /// Volume centroid for closed meshes, area-weighted centroid otherwise.
    pub fn centroid(&self) -> Vec3 {
        let volume = self.signed_volume();
        let scale = self.max_extent().max(f64::MIN_POSITIVE);
        if self.is_watertight() && volume.abs() > 1e-9 * scale.powi(3) {
            let mut acc = Vec3::zeros();
            for &[a, b, c] in &self.faces {
                let (a, b, c) = (self.vertices[a], self.vertices[b], self.vertices[c]);
                acc += a.dot(&b.cross(&c)) / 6.0 * (a + b + c) / 4.0;
            }
            return acc / volume;
        }
        let mut acc = Vec3::zeros();
        let mut total = 0.0;
        for f in 0..self.faces.len() {
            let [a, b, c] = self.triangle(f);
            let w = self.face_area(f);
            acc += w * (a + b + c) / 3.0;
            total += w;
        }
        if total > 0.0 {
            acc / total
        } else {
            self.vertices.iter().sum::<Vec3>() / self.vertices.len().max(1) as f64
        }
    }

    pub fn translated(&self, offset: Vec3) -> Self {
        self.map_vertices(|v| v + offset)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        self.map_vertices(|v| v * factor)
    }

    pub fn map_vertices(&self, f: impl Fn(Vec3) -> Vec3) -> Self {
        Self {
            vertices: self.vertices.iter().map(|&v| f(v)).collect(),
            faces: self.faces.clone(),
        }
    }

    /// Reverses every face when the signed volume is negative.
    pub fn oriented_outward(mut self) -> Self {
        if self.signed_volume() < 0.0 {
            for f in &mut self.faces {
                f.swap(1, 2);
            }
        }
        self
    }

    /// Nearest intersection with `t > t_min` (Möller–Trumbore, both sides).
    pub fn raycast(&self, origin: Vec3, dir: Vec3, t_min: f64) -> Option<RayHit> {
        let mut best: Option<RayHit> = None;
        for face in 0..self.faces.len() {
            let [a, b, c] = self.triangle(face);
            if let Some(t) = ray_triangle(origin, dir, a, b, c) {
                if t > t_min && best.is_none_or(|h| t < h.t) {
                    best = Some(RayHit {
                        t,
                        point: origin + dir * t,
                        face,
                    });
                }
            }
        }
        best
    }

    /// Closest surface point and the face it lies on.
    pub fn closest_point(&self, p: Vec3) -> Option<(Vec3, usize)> {
        let mut best: Option<(f64, Vec3, usize)> = None;
        for face in 0..self.faces.len() {
            let [a, b, c] = self.triangle(face);
            let q = closest_point_on_triangle(p, a, b, c);
            let d = (q - p).norm_squared();
            if best.is_none_or(|(bd, _, _)| d < bd) {
                best = Some((d, q, face));
            }
        }
        best.map(|(_, q, f)| (q, f))
    }

    /// Each vertex's sorted, deduplicated neighbor list.
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut nbrs = vec![Vec::new(); self.vertices.len()];
        for f in &self.faces {
            for (a, b) in face_edges(f) {
                nbrs[a].push(b);
                nbrs[b].push(a);
            }
        }
        for n in &mut nbrs {
            n.sort_unstable();
            n.dedup();
        }
        nbrs
    }

    /// Vertices on an edge used by only one face.
    pub fn boundary_vertices(&self) -> Vec<bool> {
        let mut counts: HashMap<(usize, usize), u32> = HashMap::new();
        for f in &self.faces {
            for (a, b) in face_edges(f) {
                *counts.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        let mut boundary = vec![false; self.vertices.len()];
        for ((a, b), c) in counts {
            if c == 1 {
                boundary[a] = true;
                boundary[b] = true;
            }
        }
        boundary
    }

    pub fn to_obj_string(&self) -> String {
        let mut out = String::new();
        for v in &self.vertices {
            let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
        }
        for f in &self.faces {
            let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
        }
        out
    }

    /// Parses Wavefront OBJ, keeping only `v` and `f` records.
    pub fn from_obj_str(text: &str) -> Result<Self> {
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            let mut tokens = line.split_whitespace();
            match tokens.next() {
                Some("v") => {
                    let coords: Vec<&str> = tokens.collect();
                    if coords.len() < 3 || coords.len() > 4 {
                        return Err(GeometryError::Parse {
                            line: line_no,
                            message: format!("vertex needs 3 coordinates: `{line}`"),
                        });
                    }
                    let mut v = [0.0; 3];
                    for (slot, tok) in v.iter_mut().zip(&coords) {
                        *slot = tok.parse().map_err(|_| GeometryError::Parse {
                            line: line_no,
                            message: format!("bad coordinate `{tok}`"),
                        })?;
                    }
                    vertices.push(Vec3::new(v[0], v[1], v[2]));
                }
                Some("f") => {
                    let refs: Vec<&str> = tokens.collect();
                    if refs.len() != 3 {
                        return Err(GeometryError::NonTriangleFace {
                            line: line_no,
                            face: line.to_string(),
                            count: refs.len(),
                        });
                    }
                    let mut f = [0usize; 3];
                    for (slot, tok) in f.iter_mut().zip(&refs) {
                        let idx_str = tok.split('/').next().unwrap_or("");
                        let idx: i64 = idx_str.parse().map_err(|_| GeometryError::Parse {
                            line: line_no,
                            message: format!("bad face index `{tok}`"),
                        })?;
                        let resolved = if idx > 0 {
                            idx - 1
                        } else if idx < 0 {
                            vertices.len() as i64 + idx
                        } else {
                            -1
                        };
                        if resolved < 0 || resolved as usize >= vertices.len() {
                            return Err(GeometryError::Parse {
                                line: line_no,
                                message: format!("face index `{tok}` out of range"),
                            });
                        }
                        *slot = resolved as usize;
                    }
                    faces.push(f);
                }
                _ => {}
            }
        }
        Self::new(vertices, faces).map_err(|e| match e {
            GeometryError::InvalidMesh(m) => GeometryError::Parse {
                line: 0,
                message: m,
            },
            other => other,
        })
    }
}

pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let text = fs::read_to_string(path)?;
    TriangleMesh::from_obj_str(&text)
}

pub fn save_mesh(mesh: &TriangleMesh, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, mesh.to_obj_string())?;
    Ok(())
}

fn face_edges(f: &[usize; 3]) -> [(usize, usize); 3] {
    [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])]
}

pub(crate) fn ray_triangle(origin: Vec3, dir: Vec3, a: Vec3, b: Vec3, c: Vec3) -> Option<f64> {
    let e1 = b - a;
    let e2 = c - a;
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-14 * e1.norm() * e2.norm() * dir.norm() {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - a;
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    Some(e2.dot(&q) * inv)
}

/// Ericson, Real-Time Collision Detection, 5.1.5.
pub(crate) fn closest_point_on_triangle(p: Vec3, a: Vec3, b: Vec3, c: Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

#[cfg(test)]
mod tests {
    use super::super::shapes;
    use super::*;

    fn tetra() -> TriangleMesh {
        shapes::tetrahedron(0.05)
    }

    #[test]
    fn obj_round_trip_tetrahedron() {
        let m = tetra();
        let back = TriangleMesh::from_obj_str(&m.to_obj_string()).unwrap();
        assert_eq!(back.faces(), m.faces());
        for (a, b) in back.vertices().iter().zip(m.vertices()) {
            assert!((a - b).norm() < 1e-6);
        }
    }

    #[test]
    fn obj_round_trip_sphere_file() {
        let m = shapes::uv_sphere(0.037, 32, 32);
        assert!(m.vertices().len() >= 990);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.obj");
        save_mesh(&m, &path).unwrap();
        let back = load_mesh(&path).unwrap();
        assert_eq!(back.faces(), m.faces());
        let max_err = back
            .vertices()
            .iter()
            .zip(m.vertices())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(max_err < 1e-6);
    }

    #[test]
    fn quad_face_is_rejected_with_line() {
        let text = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n";
        match TriangleMesh::from_obj_str(text) {
            Err(GeometryError::NonTriangleFace { line, face, count }) => {
                assert_eq!(line, 5);
                assert_eq!(count, 4);
                assert!(face.contains("1 2 3 4"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_lines_report_line_numbers() {
        let err = TriangleMesh::from_obj_str("v 0 0 0\nv 1 x 0\n").unwrap_err();
        assert!(matches!(err, GeometryError::Parse { line: 2, .. }));
        let err = TriangleMesh::from_obj_str("v 0 0 0\nf 1 2 3\n").unwrap_err();
        assert!(matches!(err, GeometryError::Parse { line: 2, .. }));
    }

    #[test]
    fn obj_accepts_slash_refs_and_comments() {
        let text = "# c\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1\n";
        let m = TriangleMesh::from_obj_str(text).unwrap();
        assert_eq!(m.faces(), &[[0, 1, 2]]);
    }

    #[test]
    fn degenerate_face_rejected() {
        let v = vec![Vec3::zeros(), Vec3::x(), Vec3::y()];
        assert!(TriangleMesh::new(v.clone(), vec![[0, 0, 1]]).is_err());
        assert!(TriangleMesh::new(v, vec![[0, 1, 3]]).is_err());
    }

    #[test]
    fn box_measures() {
        let m = shapes::cuboid(Vec3::new(1.0, 2.0, 3.0));
        assert!(m.is_watertight());
        assert!(m.is_consistently_oriented());
        assert!((m.signed_volume() - 6.0).abs() < 1e-12);
        assert!((m.surface_area() - 22.0).abs() < 1e-12);
        assert!(m.centroid().norm() < 1e-12);
    }

    #[test]
    fn raycast_and_closest_point_on_box() {
        let m = shapes::cuboid(Vec3::new(2.0, 2.0, 2.0));
        let hit = m
            .raycast(Vec3::new(-5.0, 0.1, 0.2), Vec3::x(), 0.0)
            .unwrap();
        assert!((hit.point.x + 1.0).abs() < 1e-12);
        let (q, f) = m.closest_point(Vec3::new(0.2, 0.3, 3.0)).unwrap();
        assert!((q - Vec3::new(0.2, 0.3, 1.0)).norm() < 1e-12);
        assert!((m.face_normal(f) - Vec3::z()).norm() < 1e-12);
    }
}
