//! Single-point contact between a stem segment and the finger axis, with
//! stick-slip of the attachment point along the axis.

use crate::types::{ContactState, Pose, Vec3};

use super::model::{FingerModel, FrictionModel, StemModel};

/// Closest approach between the stem segment and the (infinite) finger axis.
#[derive(Clone, Copy, Debug)]
pub struct Closest {
    /// Distance from the anchor along the stem, clamped to [0, length].
    pub lever: f64,
    /// Normalized axial coordinate of the closest point on the finger axis.
    pub u: f64,
    pub point_on_stem: Vec3,
    /// Offset from the axis to the stem point.
    pub offset: Vec3,
}

pub fn closest_approach(stem: &StemModel, q: [f64; 2], finger: &FingerModel, finger_pose: &Pose) -> Closest {
    let p0 = stem.anchor();
    let d = stem.direction(q);
    let rot = finger_pose.rotation();
    let origin = finger_pose.translation();
    let f = rot * Vec3::x();
    let w0 = p0 - origin;
    let b = d.dot(&f);
    let denom = 1.0 - b * b;
    let l = if denom < 1e-12 {
        0.0
    } else {
        ((b * f.dot(&w0) - d.dot(&w0)) / denom).clamp(0.0, stem.length)
    };
    let point = p0 + d * l;
    let s = f.dot(&(point - origin));
    let offset = point - (origin + f * s);
    Closest {
        lever: l,
        u: s / finger.length,
        point_on_stem: point,
        offset,
    }
}

/// Outcome of resolving one stem against the finger.
#[derive(Clone, Copy, Debug)]
pub struct Resolved {
    pub contact: ContactState,
    pub u_att: Option<f64>,
    /// Force on the stem, world frame.
    pub force: Vec3,
    pub lever: f64,
}

impl Resolved {
    fn none() -> Self {
        Self {
            contact: ContactState::none(),
            u_att: None,
            force: Vec3::zeros(),
            lever: 0.0,
        }
    }
}

/// Resolve the contact for a stem at deflection `q` against the finger at
/// `finger_pose`, given the previous attachment and slip regime.
pub fn resolve(
    stem: &StemModel,
    q: [f64; 2],
    prev_u_att: Option<f64>,
    prev_sliding: bool,
    finger: &FingerModel,
    finger_pose: &Pose,
    friction: &FrictionModel,
) -> Resolved {
    let c = closest_approach(stem, q, finger, finger_pose);
    let rot = finger_pose.rotation();
    let axis = rot * Vec3::x();
    let membrane = rot * Vec3::y();

    let dist = c.offset.norm();
    let in_front = c.offset.dot(&membrane) > 0.0;
    let u_star = c.u;
    let penetration = finger.radius_at(u_star) + stem.radius - dist;
    let on_finger = prev_u_att.is_some() || (0.0..=1.0).contains(&u_star);
    if penetration <= 0.0 || !in_front || !on_finger || dist == 0.0 {
        return Resolved::none();
    }
    let normal = c.offset / dist;
    let normal_force = penetration / finger.compliance_at(u_star);

    // shear spring between the current axial position and the attachment
    let k = friction.tangential_stiffness * finger.length;
    let (u_att, tangential, sticking) = match prev_u_att {
        None => (u_star, 0.0, true),
        Some(att) => {
            let trial = -k * (u_star - att);
            let mu = if prev_sliding {
                friction.mu_kinetic
            } else {
                friction.mu_static
            };
            if trial.abs() <= mu * normal_force {
                (att, trial, true)
            } else {
                let dir = (u_star - att).signum();
                let limit = friction.mu_kinetic * normal_force;
                (u_star - dir * limit / k, -dir * limit, false)
            }
        }
    };
    if !(0.0..=1.0).contains(&u_att) {
        return Resolved::none();
    }
    Resolved {
        contact: ContactState {
            in_contact: true,
            u: u_att,
            penetration,
            normal_force,
            tangential_force: tangential,
            sticking,
        },
        u_att: Some(u_att),
        force: normal * normal_force + axis * tangential,
        lever: c.lever,
    }
}
