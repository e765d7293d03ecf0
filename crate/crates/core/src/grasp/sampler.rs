use std::f64::consts::PI;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use super::quality::{epsilon_quality, Contact, WrenchModel};
use super::{derive_seed, GraspConfig, Result};
use crate::geometry::{TriangleMesh, Vec3};

/// Two-contact parallel-jaw grasp. Normals point out of the surface.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraspCandidate {
    pub p1: [f64; 3],
    pub p2: [f64; 3],
    pub n1: [f64; 3],
    pub n2: [f64; 3],
    /// Unit vector from `p1` to `p2`.
    pub axis: [f64; 3],
    pub width: f64,
    pub quality: f64,
    pub robust_quality: f64,
}

impl GraspCandidate {
    fn contacts(&self) -> [Contact; 2] {
        [
            Contact { point: self.p1.into(), normal: self.n1.into() },
            Contact { point: self.p2.into(), normal: self.n2.into() },
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraspSummary {
    pub graspness: f64,
    pub n_grasps: usize,
    pub successes: usize,
}

/// The configured torque scale, or the largest centroid-to-vertex distance.
pub fn torque_scale_for(mesh: &TriangleMesh, centroid: &Vec3, config: &GraspConfig) -> f64 {
    config.torque_scale.unwrap_or_else(|| {
        mesh.vertices()
            .iter()
            .map(|v| (v - centroid).norm())
            .fold(0.0, f64::max)
    })
}

fn model(config: &GraspConfig, friction: f64, torque_scale: f64) -> WrenchModel {
    WrenchModel {
        friction,
        cone_edges: config.cone_edges,
        patch_radius: config.patch_radius,
        torque_scale,
    }
}

/// Epsilon quality of the candidate's two contacts about `centroid`.
pub fn ferrari_canny(
    candidate: &GraspCandidate,
    centroid: &Vec3,
    torque_scale: f64,
    config: &GraspConfig,
) -> f64 {
    epsilon_quality(&candidate.contacts(), centroid, &model(config, config.friction, torque_scale))
}

fn perturbed_contact(c: &Contact, mesh: &TriangleMesh, noise: &Normal<f64>, rng: &mut ChaCha8Rng) -> Contact {
    let moved = c.point + Vec3::from_fn(|_, _| noise.sample(rng));
    match mesh.closest_point(moved) {
        Some((point, face)) => Contact { point, normal: mesh.face_normal(face) },
        None => *c,
    }
}

/// Per-trial qualities under contact and friction noise.
pub(crate) fn robust_trials(
    candidate: &GraspCandidate,
    mesh: &TriangleMesh,
    config: &GraspConfig,
    seed: u64,
) -> Vec<f64> {
    let centroid = mesh.centroid();
    let scale = torque_scale_for(mesh, &centroid, config);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pos = Normal::new(0.0, config.position_noise).expect("validated noise");
    let fric = Normal::new(0.0, config.friction_noise).expect("validated noise");
    let nominal = candidate.contacts();
    (0..config.robustness_trials)
        .map(|_| {
            let mu = (config.friction + fric.sample(&mut rng)).max(0.0);
            let contacts = if config.position_noise > 0.0 {
                nominal.map(|c| perturbed_contact(&c, mesh, &pos, &mut rng))
            } else {
                nominal
            };
            epsilon_quality(&contacts, &centroid, &model(config, mu, scale))
        })
        .collect()
}

/// Mean quality over `robustness_trials` perturbed copies of the candidate.
pub fn robust_quality(candidate: &GraspCandidate, mesh: &TriangleMesh, config: &GraspConfig, seed: u64) -> f64 {
    if config.position_noise == 0.0 && config.friction_noise == 0.0 {
        let centroid = mesh.centroid();
        return ferrari_canny(candidate, &centroid, torque_scale_for(mesh, &centroid, config), config);
    }
    let q = robust_trials(candidate, mesh, config, seed);
    q.iter().sum::<f64>() / q.len() as f64
}

/// Rejection-samples antipodal grasps: an area-weighted surface point, a ray
/// inside its friction cone, and the first surface hit as the second contact.
pub fn sample_antipodal_grasps(mesh: &TriangleMesh, config: &GraspConfig, seed: u64) -> Result<Vec<GraspCandidate>> {
    config.validate()?;
    let areas: Vec<f64> = (0..mesh.faces().len()).map(|f| mesh.face_area(f)).collect();
    let Ok(faces) = WeightedIndex::new(&areas) else {
        return Ok(Vec::new());
    };
    let centroid = mesh.centroid();
    let scale = torque_scale_for(mesh, &centroid, config);
    let t_min = 1e-9 * mesh.max_extent().max(f64::MIN_POSITIVE);
    let cos_limit = 1.0 / (1.0 + config.friction * config.friction).sqrt();
    let tol = 1e-9;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let attempts = config.samples_per_object * config.attempts_per_sample;
    for _ in 0..attempts {
        if out.len() == config.samples_per_object {
            break;
        }
        let face = faces.sample(&mut rng);
        let [a, b, c] = mesh.triangle(face);
        let (r1, r2): (f64, f64) = (rng.random(), rng.random());
        let s = r1.sqrt();
        let p1 = a * (1.0 - s) + b * (s * (1.0 - r2)) + c * (s * r2);
        let n1 = mesh.face_normal(face);

        let inward = -n1;
        let helper = if inward.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        let t1 = inward.cross(&helper).normalize();
        let t2 = inward.cross(&t1);
        let cos_t = rng.random_range(cos_limit..=1.0);
        let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
        let phi = rng.random_range(0.0..2.0 * PI);
        let dir = inward * cos_t + (t1 * phi.cos() + t2 * phi.sin()) * sin_t;

        let Some(hit) = mesh.raycast(p1, dir, t_min) else {
            continue;
        };
        let width = (hit.point - p1).norm();
        if width > config.gripper_max_width || width <= t_min {
            continue;
        }
        let axis = (hit.point - p1) / width;
        let n2 = mesh.face_normal(hit.face);
        if axis.dot(&inward) < cos_limit - tol || axis.dot(&n2) < cos_limit - tol {
            continue;
        }
        let mut cand = GraspCandidate {
            p1: p1.into(),
            p2: hit.point.into(),
            n1: n1.into(),
            n2: n2.into(),
            axis: axis.into(),
            width,
            quality: 0.0,
            robust_quality: 0.0,
        };
        cand.quality = ferrari_canny(&cand, &centroid, scale, config);
        cand.robust_quality = robust_quality(&cand, mesh, config, derive_seed(seed, &out.len().to_string()));
        out.push(cand);
    }
    Ok(out)
}

/// Sampled grasp count and the fraction meeting the quality threshold.
pub fn graspness(mesh: &TriangleMesh, config: &GraspConfig, seed: u64) -> Result<GraspSummary> {
    let grasps = sample_antipodal_grasps(mesh, config, seed)?;
    let successes = grasps
        .iter()
        .filter(|g| g.robust_quality >= config.quality_threshold)
        .count();
    Ok(GraspSummary {
        graspness: if grasps.is_empty() { 0.0 } else { successes as f64 / grasps.len() as f64 },
        n_grasps: grasps.len(),
        successes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::shapes;

    fn sphere(d: f64) -> TriangleMesh {
        shapes::uv_sphere(d / 2.0, 16, 24)
    }

    fn small() -> GraspConfig {
        GraspConfig { samples_per_object: 30, ..GraspConfig::default() }
    }

    #[test]
    fn sphere_grasps_are_near_diameters() {
        let cfg = small();
        let g = sample_antipodal_grasps(&sphere(0.06), &cfg, 4).unwrap();
        assert!(!g.is_empty());
        let cos_limit = 1.0 / (1.0 + cfg.friction * cfg.friction).sqrt();
        for c in &g {
            assert!(c.width <= cfg.gripper_max_width);
            let axis = Vec3::from(c.axis);
            // radial directions of the ideal sphere, not the facet normals
            let r1 = Vec3::from(c.p1).normalize();
            let r2 = Vec3::from(c.p2).normalize();
            assert!(axis.dot(&-r1) >= cos_limit - 0.03);
            assert!(axis.dot(&r2) >= cos_limit - 0.03);
            assert!((axis.norm() - 1.0).abs() < 1e-12);
            assert!((c.width - (Vec3::from(c.p2) - Vec3::from(c.p1)).norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn over_wide_sphere_has_no_grasps() {
        let m = sphere(0.10);
        assert!(sample_antipodal_grasps(&m, &small(), 1).unwrap().is_empty());
        let s = graspness(&m, &small(), 1).unwrap();
        assert_eq!((s.graspness, s.n_grasps), (0.0, 0));
    }

    #[test]
    fn sampling_is_seeded() {
        let m = shapes::cuboid(Vec3::new(0.03, 0.05, 0.04));
        let a = sample_antipodal_grasps(&m, &small(), 9).unwrap();
        assert_eq!(a, sample_antipodal_grasps(&m, &small(), 9).unwrap());
        assert_ne!(a, sample_antipodal_grasps(&m, &small(), 10).unwrap());
    }

    #[test]
    fn noiseless_robust_quality_is_nominal() {
        let m = sphere(0.05);
        let cfg = GraspConfig { position_noise: 0.0, friction_noise: 0.0, ..small() };
        for c in sample_antipodal_grasps(&m, &cfg, 2).unwrap() {
            assert_eq!(c.robust_quality, c.quality);
            assert_eq!(robust_quality(&c, &m, &cfg, 77), c.quality);
        }
    }

    #[test]
    fn robust_quality_is_bounded_and_reproducible() {
        let m = sphere(0.05);
        let cfg = small();
        let g = sample_antipodal_grasps(&m, &cfg, 3).unwrap();
        assert!(!g.is_empty());
        for c in g.iter().take(5) {
            let trials = robust_trials(c, &m, &cfg, 11);
            let r = robust_quality(c, &m, &cfg, 11);
            assert_eq!(r, robust_quality(c, &m, &cfg, 11));
            assert!(r <= trials.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
            assert!(r >= 0.0 && r <= 1.5 * c.quality, "{r} vs {}", c.quality);
        }
    }

    #[test]
    fn small_cube_is_easy_to_grasp() {
        let cube = shapes::cuboid(Vec3::new(0.03, 0.03, 0.03));
        let cfg = GraspConfig { friction: 0.6, gripper_max_width: 0.08, samples_per_object: 100, ..GraspConfig::default() };
        let s = graspness(&cube, &cfg, 0).unwrap();
        assert!(s.n_grasps > 0);
        assert!(s.graspness > 0.5, "{s:?}");
    }

    #[test]
    fn graspness_is_a_fraction() {
        for (i, shape) in crate::corpus::toy_corpus(6, 5).iter().enumerate() {
            let s = graspness(&shape.mesh, &small(), i as u64).unwrap();
            assert!((0.0..=1.0).contains(&s.graspness));
            assert!(s.successes <= s.n_grasps);
        }
    }
}
