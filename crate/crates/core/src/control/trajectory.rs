//! Reference trajectories: time-optimal straight pushes and circular arcs.

use nalgebra::Rotation3;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::types::{Pose, Twist, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryKind {
    LinearBangBang,
    Arc,
}

impl TrajectoryKind {
    pub fn name(&self) -> &'static str {
        match self {
            TrajectoryKind::LinearBangBang => "linear",
            TrajectoryKind::Arc => "arc",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub kind: TrajectoryKind,
    pub p0: [f64; 3],
    pub q0: [f64; 3],
    pub pf: [f64; 3],
    pub qf: [f64; 3],
    /// m/s; for arcs, the constant traversal speed.
    pub v_max: f64,
    /// m/s², unused by arcs.
    pub a_max: f64,
    /// Arc center; required for arcs.
    pub center: Option<[f64; 3]>,
}

/// Sample of a reference trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Reference {
    pub twist: Twist,
    /// True when `t` lies outside `[0, duration]`; the twist is then zero.
    pub finished: bool,
}

impl TrajectorySpec {
    pub fn linear(p0: [f64; 3], q0: [f64; 3], pf: [f64; 3], qf: [f64; 3], v_max: f64, a_max: f64) -> Self {
        Self {
            kind: TrajectoryKind::LinearBangBang,
            p0,
            q0,
            pf,
            qf,
            v_max,
            a_max,
            center: None,
        }
    }

    /// Arc from `p0` to `pf` of the given radius, bulging toward `bulge`
    /// (any vector not parallel to the chord).
    pub fn arc_through(
        p0: [f64; 3],
        q0: [f64; 3],
        pf: [f64; 3],
        qf: [f64; 3],
        radius: f64,
        bulge: [f64; 3],
        speed: f64,
    ) -> Result<Self> {
        let a = Vec3::from(p0);
        let b = Vec3::from(pf);
        let chord = b - a;
        let half = chord.norm() / 2.0;
        ensure(radius > half, "arc.radius", || {
            format!("radius {radius} must exceed half the chord {half}")
        })?;
        let dir = chord / (2.0 * half);
        let bulge = Vec3::from(bulge);
        let perp = bulge - dir * bulge.dot(&dir);
        ensure(perp.norm() > 1e-9, "arc.bulge", || "bulge is parallel to the chord".into())?;
        let n = perp.normalize();
        let center = (a + b) / 2.0 - n * (radius * radius - half * half).sqrt();
        let spec = Self {
            kind: TrajectoryKind::Arc,
            p0,
            q0,
            pf,
            qf,
            v_max: speed,
            a_max: 0.0,
            center: Some([center.x, center.y, center.z]),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.p0.iter().chain(&self.pf).chain(&self.q0).chain(&self.qf).all(|v| v.is_finite());
        ensure(finite, "trajectory", || "non-finite endpoint".into())?;
        ensure(self.v_max > 0.0, "trajectory.v_max", || "must be positive".into())?;
        match self.kind {
            TrajectoryKind::LinearBangBang => {
                ensure(self.a_max > 0.0, "trajectory.a_max", || "must be positive".into())
            }
            TrajectoryKind::Arc => {
                ensure(self.pf[2] > self.p0[2], "trajectory.pf", || {
                    "arc must end above its start (pf.z > p0.z)".into()
                })?;
                let c = Vec3::from(self.center.ok_or_else(|| {
                    crate::Error::validation("trajectory.center", "arc needs a center")
                })?);
                let r0 = (Vec3::from(self.p0) - c).norm();
                let rf = (Vec3::from(self.pf) - c).norm();
                ensure(r0 > 0.0 && (r0 - rf).abs() <= 1e-9 * r0.max(1.0), "trajectory.center", || {
                    format!("p0 and pf are not equidistant from the center ({r0} vs {rf})")
                })?;
                let (_, _, phi) = self.arc_frame(&c);
                ensure(phi > 1e-9, "trajectory", || "arc subtends no angle".into())
            }
        }
    }

    fn distance(&self) -> f64 {
        (Vec3::from(self.pf) - Vec3::from(self.p0)).norm()
    }

    /// In-plane basis `(e1, e2)` of the arc and its subtended angle.
    fn arc_frame(&self, c: &Vec3) -> (Vec3, Vec3, f64) {
        let r0 = Vec3::from(self.p0) - c;
        let rf = Vec3::from(self.pf) - c;
        let e1 = r0.normalize();
        let perp = rf - e1 * rf.dot(&e1);
        let e2 = if perp.norm() > 1e-12 {
            perp.normalize()
        } else {
            // half circle: any perpendicular works, pick one deterministically
            let helper = if e1.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
            (helper - e1 * helper.dot(&e1)).normalize()
        };
        let phi = rf.dot(&e2).atan2(rf.dot(&e1));
        (e1, e2, phi)
    }

    /// Total duration, seconds.
    pub fn duration(&self) -> f64 {
        match self.kind {
            TrajectoryKind::LinearBangBang => {
                let d = self.distance();
                let (v, a) = (self.v_max, self.a_max);
                if d * a >= v * v {
                    d / v + v / a
                } else {
                    2.0 * (d / a).sqrt()
                }
            }
            TrajectoryKind::Arc => {
                let c = Vec3::from(self.center.unwrap_or(self.p0));
                let r = (Vec3::from(self.p0) - c).norm();
                let (_, _, phi) = self.arc_frame(&c);
                r * phi / self.v_max
            }
        }
    }

    /// Path progress in [0, 1] and its time derivative.
    fn progress(&self, t: f64) -> (f64, f64) {
        let total = self.duration();
        match self.kind {
            TrajectoryKind::Arc => (t / total, 1.0 / total),
            TrajectoryKind::LinearBangBang => {
                let d = self.distance();
                if d == 0.0 {
                    return (t / total, 1.0 / total);
                }
                let a = self.a_max;
                let ta = if d * a >= self.v_max * self.v_max {
                    self.v_max / a
                } else {
                    total / 2.0
                };
                let vpeak = a * ta;
                let (s, v) = if t < ta {
                    (0.5 * a * t * t, a * t)
                } else if t <= total - ta {
                    (0.5 * a * ta * ta + vpeak * (t - ta), vpeak)
                } else {
                    let rem = total - t;
                    (d - 0.5 * a * rem * rem, a * rem)
                };
                (s / d, v / d)
            }
        }
    }

    fn rotation_delta(&self) -> Vec3 {
        let r0 = Pose::new([0.0; 3], self.q0).rotation();
        let rf = Pose::new([0.0; 3], self.qf).rotation();
        (rf * r0.inverse()).scaled_axis()
    }

    /// Reference pose at time `t` (clamped to the trajectory).
    pub fn pose_at(&self, t: f64) -> Pose {
        let t = t.clamp(0.0, self.duration());
        let (s, _) = self.progress(t);
        let rot = Rotation3::new(self.rotation_delta() * s) * Pose::new([0.0; 3], self.q0).rotation();
        let pos = match self.kind {
            TrajectoryKind::LinearBangBang => {
                Vec3::from(self.p0) + (Vec3::from(self.pf) - Vec3::from(self.p0)) * s
            }
            TrajectoryKind::Arc => {
                let c = Vec3::from(self.center.expect("validated arc"));
                let r = (Vec3::from(self.p0) - c).norm();
                let (e1, e2, phi) = self.arc_frame(&c);
                let th = phi * s;
                c + (e1 * th.cos() + e2 * th.sin()) * r
            }
        };
        Pose::from_parts(pos, &rot)
    }

    /// Reference twist at time `t`: world-frame linear velocity and angular
    /// velocity about the end-effector origin.
    pub fn reference_twist(&self, t: f64) -> Reference {
        let total = self.duration();
        if !(0.0..=total).contains(&t) {
            return Reference {
                twist: Twist::zero(),
                finished: true,
            };
        }
        let (s, sdot) = self.progress(t);
        let angular = self.rotation_delta() * sdot;
        let linear = match self.kind {
            TrajectoryKind::LinearBangBang => (Vec3::from(self.pf) - Vec3::from(self.p0)) * sdot,
            TrajectoryKind::Arc => {
                let c = Vec3::from(self.center.expect("validated arc"));
                let r = (Vec3::from(self.p0) - c).norm();
                let (e1, e2, phi) = self.arc_frame(&c);
                let th = phi * s;
                (e2 * th.cos() - e1 * th.sin()) * (r * phi * sdot)
            }
        };
        Reference {
            twist: Twist {
                linear: [linear.x, linear.y, linear.z],
                angular: [angular.x, angular.y, angular.z],
            },
            finished: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_profile_when_vmax_not_reached() {
        let s = TrajectorySpec::linear([0.0; 3], [0.0; 3], [0.2, 0.0, 0.0], [0.0; 3], 1.0, 0.8);
        assert!((s.duration() - 1.0).abs() < 1e-12);
        let mid = s.reference_twist(0.5).twist.linear[0];
        assert!((mid - 0.4).abs() < 1e-12);
    }

    #[test]
    fn endpoints_are_reached() {
        let s = TrajectorySpec::linear([0.1, 0.0, 0.0], [0.0; 3], [0.1, 0.2, 0.05], [0.0, 0.0, 0.3], 0.2, 0.8);
        let end = s.pose_at(s.duration());
        for k in 0..3 {
            assert!((end.position[k] - s.pf[k]).abs() < 1e-12);
        }
        assert!((end.orientation[2] - 0.3).abs() < 1e-12);
        assert!(s.reference_twist(s.duration() + 0.01).finished);
    }

    #[test]
    fn arc_rejects_descending_end() {
        let r = TrajectorySpec::arc_through([0.0; 3], [0.0; 3], [0.0, 0.1, -0.01], [0.0; 3], 0.2, [0.0, 0.0, 1.0], 0.1);
        assert!(r.is_err());
    }
}
