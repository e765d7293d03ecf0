//! Procedural toy corpus of watertight shapes with seeded random dimensions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{shapes, TriangleMesh, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToyKind {
    Box,
    Sphere,
    Cylinder,
    Capsule,
    LPrism,
    Plate,
}

impl ToyKind {
    pub const ALL: [ToyKind; 6] = [
        ToyKind::Box,
        ToyKind::Sphere,
        ToyKind::Cylinder,
        ToyKind::Capsule,
        ToyKind::LPrism,
        ToyKind::Plate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ToyKind::Box => "box",
            ToyKind::Sphere => "sphere",
            ToyKind::Cylinder => "cylinder",
            ToyKind::Capsule => "capsule",
            ToyKind::LPrism => "lprism",
            ToyKind::Plate => "plate",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyShape {
    pub id: String,
    pub kind: ToyKind,
    pub mesh: TriangleMesh,
}

/// Swaps axes so a z-aligned primitive points along `axis`.
fn along(mesh: TriangleMesh, axis: usize) -> TriangleMesh {
    match axis {
        0 => mesh.map_vertices(|v| Vec3::new(v.z, v.x, v.y)),
        1 => mesh.map_vertices(|v| Vec3::new(v.y, v.z, v.x)),
        _ => mesh,
    }
}

/// One shape of the given kind; sizes are in meters.
pub fn toy_shape(kind: ToyKind, rng: &mut impl Rng) -> TriangleMesh {
    let mut size = || rng.random_range(0.03..0.12);
    match kind {
        ToyKind::Box => shapes::cuboid(Vec3::new(size(), size(), size())),
        ToyKind::Sphere => shapes::uv_sphere(size() / 2.0, 16, 24),
        ToyKind::Cylinder => {
            let (d, h) = (size(), size());
            let axis = rng.random_range(0..3);
            along(shapes::cylinder(d / 2.0, h, 24), axis)
        }
        ToyKind::Capsule => {
            let (d, l) = (size() * 0.6, size());
            let axis = rng.random_range(0..3);
            along(shapes::capsule(d / 2.0, l, 12, 24), axis)
        }
        ToyKind::LPrism => {
            let (a, b, depth) = (size(), size(), size() * 0.6);
            let t = a.min(b) * rng.random_range(0.25..0.45);
            let axis = rng.random_range(0..3);
            along(shapes::l_prism(a, b, t, depth), axis)
        }
        ToyKind::Plate => {
            let (a, b) = (size(), size());
            let t = a.max(b) * rng.random_range(0.08..0.15);
            let axis = rng.random_range(0..3);
            along(shapes::cuboid(Vec3::new(a, b, t)), axis)
        }
    }
}

/// `count` shapes cycling through every kind, ids `toy_0000`, `toy_0001`, ….
pub fn toy_corpus(count: usize, seed: u64) -> Vec<ToyShape> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let kind = ToyKind::ALL[i % ToyKind::ALL.len()];
            ToyShape {
                id: format!("toy_{i:04}"),
                kind,
                mesh: toy_shape(kind, &mut rng),
            }
        })
        .collect()
}
