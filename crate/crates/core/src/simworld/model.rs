//! Physical parameters of the stem, the finger and their contact.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::types::{Pose, Vec3};

/// A stem modelled as a rigid link on a 2-DOF nonlinear torsional spring,
/// carrying the fruit as a tip mass.
///
/// The deflection `q` is a rotation vector perpendicular to the rest
/// direction: the stem direction is `sin|q|/|q| * (q1 e1 + q2 e2) + cos|q| e3`,
/// so `q` points the way the tip moves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StemModel {
    pub anchor: [f64; 3],
    pub rest_direction: [f64; 3],
    /// m
    pub length: f64,
    /// kg
    pub tip_mass: f64,
    /// N·m/rad
    pub k1: f64,
    /// N·m/rad³
    pub k3: f64,
    /// N·m·s/rad
    pub damping: f64,
    /// m
    pub radius: f64,
}

impl Default for StemModel {
    fn default() -> Self {
        Self {
            anchor: [0.0, 0.0, 0.20],
            rest_direction: [0.0, 0.0, -1.0],
            length: 0.12,
            tip_mass: 0.025,
            k1: 0.08,
            k3: 0.15,
            damping: 0.01,
            radius: 0.0015,
        }
    }
}

impl StemModel {
    pub fn validate(&self, field: &str) -> Result<()> {
        let e3 = Vec3::from(self.rest_direction);
        ensure(e3.norm() > 1e-9, field, || "rest_direction is zero".into())?;
        ensure(self.length > 0.0, field, || "length must be positive".into())?;
        ensure(self.tip_mass > 0.0, field, || "tip_mass must be positive".into())?;
        ensure(self.k1 > 0.0, field, || "k1 must be positive".into())?;
        ensure(self.k3 >= 0.0, field, || "k3 must be non-negative".into())?;
        ensure(self.damping > 0.0, field, || "damping must be positive".into())?;
        ensure(self.radius >= 0.0, field, || "radius must be non-negative".into())
    }

    pub fn anchor(&self) -> Vec3 {
        Vec3::from(self.anchor)
    }

    /// Orthonormal `(e1, e2, e3)` with `e3` along the rest direction.
    pub fn basis(&self) -> (Vec3, Vec3, Vec3) {
        let e3 = Vec3::from(self.rest_direction).normalize();
        let helper = if e3.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        let e1 = (helper - e3 * helper.dot(&e3)).normalize();
        let e2 = e3.cross(&e1);
        (e1, e2, e3)
    }

    pub fn inertia(&self) -> f64 {
        self.tip_mass * self.length * self.length
    }

    pub fn direction(&self, q: [f64; 2]) -> Vec3 {
        let (e1, e2, e3) = self.basis();
        let r = (q[0] * q[0] + q[1] * q[1]).sqrt();
        let s = sinc(r);
        (e1 * q[0] + e2 * q[1]) * s + e3 * r.cos()
    }

    /// `d direction / d q_j` for j = 0, 1.
    pub fn direction_jacobian(&self, q: [f64; 2]) -> [Vec3; 2] {
        let (e1, e2, e3) = self.basis();
        let r2 = q[0] * q[0] + q[1] * q[1];
        let r = r2.sqrt();
        let s = sinc(r);
        // (sinc)'(r) / r, finite at r = 0
        let w = if r < 1e-4 {
            -1.0 / 3.0 + r2 / 30.0
        } else {
            (r * r.cos() - r.sin()) / (r2 * r)
        };
        let lateral = e1 * q[0] + e2 * q[1];
        let basis = [e1, e2];
        [0, 1].map(|j| basis[j] * s + lateral * (w * q[j]) - e3 * (s * q[j]))
    }

    /// Elastic plus gravitational potential energy relative to the rest pose.
    pub fn potential_energy(&self, q: [f64; 2], gravity: &Vec3) -> f64 {
        let r2 = q[0] * q[0] + q[1] * q[1];
        let elastic = 0.5 * self.k1 * r2 + 0.25 * self.k3 * r2 * r2;
        let (_, _, e3) = self.basis();
        let lift = self.direction(q) - e3;
        elastic - self.tip_mass * self.length * gravity.dot(&lift)
    }
}

fn sinc(r: f64) -> f64 {
    if r < 1e-4 {
        1.0 - r * r / 6.0
    } else {
        r.sin() / r
    }
}

/// Linear profile over the normalized axial coordinate, clamped to [0, 1].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearProfile {
    pub at_base: f64,
    pub at_tip: f64,
}

impl LinearProfile {
    pub fn eval(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        self.at_base + (self.at_tip - self.at_base) * u
    }
}

/// Half-conic tactile finger. In its own frame the axis runs along +x from
/// the base (camera, u = 0) to the tip (u = 1) and the membrane faces +y.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FingerModel {
    /// m
    pub length: f64,
    /// Membrane radius, m.
    pub radius: LinearProfile,
    /// Membrane compliance, m/N.
    pub compliance: LinearProfile,
    /// Finger-base pose in the end-effector frame.
    pub mount: Pose,
}

impl Default for FingerModel {
    fn default() -> Self {
        Self {
            length: 0.060,
            radius: LinearProfile {
                at_base: 0.010,
                at_tip: 0.003,
            },
            compliance: LinearProfile {
                at_base: 4e-3,
                at_tip: 1e-3,
            },
            // wrist sits 12 cm behind the membrane, level with mid-finger
            mount: Pose::new([-0.030, 0.120, 0.0], [0.0; 3]),
        }
    }
}

impl FingerModel {
    pub fn validate(&self) -> Result<()> {
        ensure(self.length > 0.0, "finger.length", || "must be positive".into())?;
        ensure(
            self.radius.at_base > 0.0 && self.radius.at_tip > 0.0,
            "finger.radius",
            || "radius must be positive along the whole axis".into(),
        )?;
        ensure(
            self.compliance.at_base > self.compliance.at_tip && self.compliance.at_tip > 0.0,
            "finger.compliance",
            || "compliance must decrease from base to a positive tip value".into(),
        )?;
        self.mount.validate()
    }

    pub fn radius_at(&self, u: f64) -> f64 {
        self.radius.eval(u)
    }

    pub fn compliance_at(&self, u: f64) -> f64 {
        self.compliance.eval(u)
    }

    /// World pose of the finger base for a given end-effector pose.
    pub fn world_pose(&self, ee: &Pose) -> Pose {
        ee.compose(&self.mount)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrictionModel {
    pub mu_static: f64,
    pub mu_kinetic: f64,
    /// Shear stiffness of the membrane along the axis, N/m.
    pub tangential_stiffness: f64,
}

impl Default for FrictionModel {
    fn default() -> Self {
        Self {
            mu_static: 0.5,
            mu_kinetic: 0.35,
            tangential_stiffness: 300.0,
        }
    }
}

impl FrictionModel {
    pub fn validate(&self) -> Result<()> {
        ensure(
            self.mu_kinetic > 0.0 && self.mu_kinetic <= self.mu_static,
            "friction",
            || "need 0 < mu_kinetic <= mu_static".into(),
        )?;
        ensure(self.tangential_stiffness > 0.0, "friction.tangential_stiffness", || {
            "must be positive".into()
        })
    }
}

/// Everything the physics needs besides the state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldModels {
    pub stem: StemModel,
    #[serde(default)]
    pub distractors: Vec<StemModel>,
    pub finger: FingerModel,
    pub friction: FrictionModel,
    /// m/s²
    pub gravity: [f64; 3],
}

impl Default for WorldModels {
    fn default() -> Self {
        Self {
            stem: StemModel::default(),
            distractors: Vec::new(),
            finger: FingerModel::default(),
            friction: FrictionModel::default(),
            gravity: [0.0, 0.0, -9.81],
        }
    }
}

impl WorldModels {
    pub fn validate(&self) -> Result<()> {
        self.stem.validate("stem")?;
        for (i, d) in self.distractors.iter().enumerate() {
            d.validate(&format!("distractors[{i}]"))?;
        }
        self.finger.validate()?;
        self.friction.validate()
    }

    pub fn gravity(&self) -> Vec3 {
        Vec3::from(self.gravity)
    }

    /// The target first, then distractors.
    pub fn stems(&self) -> impl Iterator<Item = &StemModel> {
        std::iter::once(&self.stem).chain(&self.distractors)
    }

    pub fn without_distractors(&self) -> Self {
        Self {
            distractors: Vec::new(),
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direction_is_unit_and_follows_q() {
        let s = StemModel::default();
        let (e1, _, e3) = s.basis();
        assert!((s.direction([0.0, 0.0]) - e3).norm() < 1e-15);
        let d = s.direction([0.3, -0.2]);
        assert!((d.norm() - 1.0).abs() < 1e-12);
        assert!(s.direction([0.2, 0.0]).dot(&e1) > 0.0);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let s = StemModel::default();
        for q in [[0.0, 0.0], [1e-6, 2e-6], [0.3, -0.4], [1.0, 0.2]] {
            let jac = s.direction_jacobian(q);
            for j in 0..2 {
                let h = 1e-6;
                let mut qp = q;
                let mut qm = q;
                qp[j] += h;
                qm[j] -= h;
                let fd = (s.direction(qp) - s.direction(qm)) / (2.0 * h);
                assert!((fd - jac[j]).norm() < 1e-8, "q = {q:?}, j = {j}");
            }
        }
    }

    #[test]
    fn default_models_are_valid() {
        WorldModels::default().validate().unwrap();
        let f = FingerModel::default();
        assert!(f.compliance_at(0.0) > f.compliance_at(1.0));
    }
}
