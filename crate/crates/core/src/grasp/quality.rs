use std::f64::consts::PI;

use super::hull::{origin_depth, Wrench};
use crate::geometry::Vec3;

/// One contact: a point on the surface and the surface's outward unit normal there.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Contact {
    pub point: Vec3,
    pub normal: Vec3,
}

/// Parameters of the wrench-space model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WrenchModel {
    pub friction: f64,
    pub cone_edges: usize,
    /// Radius of the contact patch resisting torque about the normal; zero
    /// gives hard point contacts.
    pub patch_radius: f64,
    pub torque_scale: f64,
}

/// Unit tangent at a contact: `reference` projected off the normal, falling
/// back to the x then y axis when that projection vanishes.
fn tangent(n: &Vec3, reference: &Vec3) -> Vec3 {
    for r in [*reference, Vec3::x(), Vec3::y()] {
        let t = r - n * n.dot(&r);
        if t.norm() > 1e-6 * r.norm().max(f64::MIN_POSITIVE) && t.norm() > 0.0 {
            return t.normalize();
        }
    }
    unreachable!("x and y cannot both be parallel to a unit normal")
}

/// Primitive wrenches of one contact about `center`.
///
/// Forces are the `m` unit-magnitude edges of the friction cone around the
/// inward normal, starting from the tangent closest to `reference`; two more
/// wrenches push along the normal while twisting about it by
/// `±μ·patch_radius`.
pub fn contact_wrenches(
    c: &Contact,
    center: &Vec3,
    reference: &Vec3,
    model: &WrenchModel,
    out: &mut Vec<Wrench>,
) {
    let inward = -c.normal;
    let t1 = tangent(&inward, reference);
    let t2 = inward.cross(&t1);
    let arm = c.point - center;
    let scale = model.torque_scale;
    let mut push = |f: Vec3, torque: Vec3| {
        out.push(Wrench::new(f.x, f.y, f.z, torque.x / scale, torque.y / scale, torque.z / scale));
    };
    for j in 0..model.cone_edges {
        let theta = 2.0 * PI * j as f64 / model.cone_edges as f64;
        let f = (inward + model.friction * (theta.cos() * t1 + theta.sin() * t2)).normalize();
        push(f, arm.cross(&f));
    }
    let twist = inward * (model.friction * model.patch_radius);
    for sign in [1.0, -1.0] {
        push(inward, arm.cross(&inward) + twist * sign);
    }
}

/// Cone phase reference shared by all contacts: the offset of the center from
/// the contacts' mean, so the discretization moves with the scene.
pub fn cone_reference(contacts: &[Contact], center: &Vec3) -> Vec3 {
    let mean = contacts.iter().map(|c| c.point).sum::<Vec3>() / contacts.len().max(1) as f64;
    center - mean
}

/// Epsilon quality: radius of the largest origin-centred ball inside the hull
/// of the contacts' primitive wrenches.
pub fn epsilon_quality(contacts: &[Contact], center: &Vec3, model: &WrenchModel) -> f64 {
    let mut w = Vec::with_capacity(contacts.len() * (model.cone_edges + 2));
    let reference = cone_reference(contacts, center);
    for c in contacts {
        contact_wrenches(c, center, &reference, model, &mut w);
    }
    origin_depth(&w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;

    fn model(mu: f64, m: usize) -> WrenchModel {
        WrenchModel {
            friction: mu,
            cone_edges: m,
            patch_radius: 0.005,
            torque_scale: 0.03,
        }
    }

    fn sphere_grasp(r: f64) -> [Contact; 2] {
        [
            Contact { point: Vec3::new(r, 0.0, 0.0), normal: Vec3::x() },
            Contact { point: Vec3::new(-r, 0.0, 0.0), normal: -Vec3::x() },
        ]
    }

    /// `min_u max_i u·w_i` over unit directions: random sampling on S⁵, then
    /// random-direction descent from the best starts. Coordinate steps stall
    /// on the kinks of a max of linear functions.
    fn support_oracle(w: &[Wrench]) -> f64 {
        use rand::{Rng, SeedableRng};
        let support = |u: &Wrench| w.iter().map(|x| x.dot(u)).fold(f64::NEG_INFINITY, f64::max);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let random_unit = |rng: &mut rand_chacha::ChaCha8Rng| {
            Wrench::from_fn(|_, _| rng.random_range(-1.0..1.0)).normalize()
        };
        let mut starts: Vec<(f64, Wrench)> = (0..100_000)
            .map(|_| {
                let u = random_unit(&mut rng);
                (support(&u), u)
            })
            .collect();
        starts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut best = f64::INFINITY;
        for (mut val, mut u) in starts.into_iter().take(10) {
            let mut step = 0.1;
            while step > 1e-8 {
                let mut improved = false;
                for _ in 0..400 {
                    let v = (u + random_unit(&mut rng) * step).normalize();
                    let sv = support(&v);
                    if sv < val {
                        val = sv;
                        u = v;
                        improved = true;
                    }
                }
                if !improved {
                    step /= 2.0;
                }
            }
            best = best.min(val);
        }
        best.max(0.0)
    }

    #[test]
    fn single_contact_has_no_closure() {
        let c = sphere_grasp(0.03);
        assert_eq!(epsilon_quality(&c[..1], &Vec3::zeros(), &model(0.5, 8)), 0.0);
    }

    #[test]
    fn frictionless_antipodal_has_no_closure() {
        let c = sphere_grasp(0.03);
        assert_eq!(epsilon_quality(&c, &Vec3::zeros(), &model(0.0, 8)), 0.0);
    }

    #[test]
    fn hard_contacts_cannot_resist_axial_torque() {
        let c = sphere_grasp(0.03);
        let hard = WrenchModel { patch_radius: 0.0, ..model(0.5, 8) };
        assert_eq!(epsilon_quality(&c, &Vec3::zeros(), &hard), 0.0);
    }

    #[test]
    fn frictional_grasp_matches_dense_oracle() {
        let c = sphere_grasp(0.03);
        let center = Vec3::zeros();
        let q8 = epsilon_quality(&c, &center, &model(0.5, 8));
        assert!(q8 > 0.0);
        let mut w = Vec::new();
        let reference = cone_reference(&c, &center);
        for contact in &c {
            contact_wrenches(contact, &center, &reference, &model(0.5, 64), &mut w);
        }
        let dense = support_oracle(&w);
        assert!((q8 - dense).abs() / dense < 0.10, "{q8} vs {dense}");
        // the hull and the support function agree on the same wrench set
        let q64 = epsilon_quality(&c, &center, &model(0.5, 64));
        assert!((q64 - dense).abs() / dense < 1e-3, "{q64} vs {dense}");
    }

    #[test]
    fn quality_grows_with_friction() {
        let c = [
            Contact { point: Vec3::new(0.03, 0.004, -0.002), normal: Vec3::new(1.0, 0.1, 0.0).normalize() },
            Contact { point: Vec3::new(-0.03, 0.001, 0.003), normal: Vec3::new(-1.0, 0.05, -0.1).normalize() },
        ];
        let center = Vec3::new(0.002, -0.001, 0.0);
        let qs: Vec<f64> = [0.0, 0.2, 0.4, 0.6]
            .iter()
            .map(|&mu| epsilon_quality(&c, &center, &model(mu, 8)))
            .collect();
        for w in qs.windows(2) {
            assert!(w[1] >= w[0], "{qs:?}");
        }
    }

    #[test]
    fn rigid_motion_invariance() {
        let rot = Rotation3::from_euler_angles(0.3, -1.1, 2.0);
        let shift = Vec3::new(0.5, -0.2, 1.0);
        let scenes = [
            (sphere_grasp(0.03).to_vec(), Vec3::new(0.001, 0.002, -0.001)),
            (sphere_grasp(0.03).to_vec(), Vec3::zeros()),
        ];
        for (contacts, center) in scenes {
            let q = epsilon_quality(&contacts, &center, &model(0.5, 8));
            let moved: Vec<Contact> = contacts
                .iter()
                .map(|k| Contact {
                    point: rot * k.point + shift,
                    normal: rot * k.normal,
                })
                .collect();
            let q2 = epsilon_quality(&moved, &(rot * center + shift), &model(0.5, 8));
            assert!(q > 0.0);
            assert!((q - q2).abs() < 1e-9, "{q} vs {q2}");
        }
    }
}
