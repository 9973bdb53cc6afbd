use serde::{Deserialize, Serialize};

use crate::types::{Pose, Twist, Vec3};

pub const DEFAULT_RESIDUAL_LIMIT: f64 = 0.5;

/// What a controller asks the arm to do for one control tick.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlCommand {
    pub a_ref: Twist,
    /// Rotational velocity about `contact_axis`, rad/s, after saturation.
    pub a_res: f64,
    /// `a_ref` plus `a_res` about `contact_axis`.
    pub total: Twist,
    pub contact_axis: [f64; 3],
    pub saturated: bool,
    /// The controller wanted to act but could not (no model, lost contact).
    pub degraded: bool,
    /// The reference trajectory has finished.
    pub finished: bool,
}

impl ControlCommand {
    pub fn new(a_ref: Twist, a_res: f64, contact_axis: Vec3) -> Self {
        let mut total = a_ref;
        for (k, w) in total.angular.iter_mut().enumerate() {
            *w += a_res * contact_axis[k];
        }
        Self {
            a_ref,
            a_res,
            total,
            contact_axis: [contact_axis.x, contact_axis.y, contact_axis.z],
            saturated: false,
            degraded: false,
            finished: false,
        }
    }

    /// Pure reference tracking.
    pub fn reference(a_ref: Twist, contact_axis: Vec3) -> Self {
        Self {
            total: a_ref,
            ..Self::new(a_ref, 0.0, contact_axis)
        }
    }

    pub fn idle() -> Self {
        Self::reference(Twist::zero(), Vec3::z())
    }

    pub fn is_finite(&self) -> bool {
        self.a_ref.is_finite()
            && self.total.is_finite()
            && self.a_res.is_finite()
            && self.contact_axis.iter().all(|v| v.is_finite())
    }
}

/// Clamp to `[-limit, limit]`, reporting whether clamping happened.
pub fn saturate(value: f64, limit: f64) -> (f64, bool) {
    if value > limit {
        (limit, true)
    } else if value < -limit {
        (-limit, true)
    } else {
        (value, false)
    }
}

/// Contact-line axis in the world frame for an end-effector pose: the
/// finger's local z, i.e. axis x membrane normal. A positive rotation about
/// it (through the wrist) moves the contact toward the finger tip.
pub fn contact_axis(ee: &Pose, mount: &Pose) -> Vec3 {
    (ee.rotation() * mount.rotation()) * Vec3::z()
}
