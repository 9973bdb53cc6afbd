use rand::Rng;

use crate::error::{ensure, Result};
use crate::rng::SimRng;
use crate::types::{Pose, Vec3};

use super::model::{StemModel, WorldModels};

const MAX_ATTEMPTS: usize = 1000;

/// Add `n - 1` distractor stems around the target. Distractors hang beside
/// the target along the finger axis of the approach pose `ee`, alternating
/// sides, and sit further from the membrane than the target so the finger
/// meets them partway through a push. Stiffness and mass are jittered.
pub fn make_cluster(n: usize, spacing: f64, base: &WorldModels, ee: &Pose, rng: &SimRng) -> Result<WorldModels> {
    ensure(n >= 2, "cluster.n", || format!("a cluster needs at least 2 stems, got {n}"))?;
    ensure(spacing > 0.0 && spacing.is_finite(), "cluster.spacing", || format!("{spacing} must be positive"))?;
    let mut rng = rng.split("cluster");
    let target = &base.stem;
    let finger = base.finger.world_pose(ee);
    let rot = finger.rotation();
    let (axis, membrane) = (rot * Vec3::x(), rot * Vec3::y());
    let u_of = |a: Vec3| ((a - finger.translation()).dot(&axis) / base.finger.length).clamp(0.0, 1.0);
    let r_target = base.finger.radius_at(u_of(target.anchor()));
    let mut anchors = vec![target.anchor()];
    let mut distractors = Vec::with_capacity(n - 1);
    for j in 0..n - 1 {
        let side = if j % 2 == 0 { 1.0 } else { -1.0 };
        let ring = (j / 2 + 1) as f64;
        let mut placed = None;
        for _ in 0..MAX_ATTEMPTS {
            let along = side * spacing * ring * rng.gen_range(0.8..1.25);
            let behind = rng.gen_range(0.5..1.5) * spacing;
            let dz = rng.gen_range(-0.01..0.01);
            let beside = target.anchor() + axis * along;
            // equal gap to the membrane along the cone, plus `behind`
            let lift = base.finger.radius_at(u_of(beside)) - r_target;
            let a = beside + membrane * (behind + lift) + Vec3::z() * dz;
            if anchors.iter().all(|b| (a - b).norm() >= spacing / 2.0) {
                placed = Some(a);
                break;
            }
        }
        let anchor = placed.ok_or_else(|| {
            crate::Error::validation("cluster.spacing", "could not place distractors at this spacing")
        })?;
        anchors.push(anchor);
        distractors.push(StemModel {
            anchor: [anchor.x, anchor.y, anchor.z],
            length: target.length * rng.gen_range(0.9..1.1),
            tip_mass: rng.gen_range(0.015..0.035),
            k1: target.k1 * rng.gen_range(0.8..1.2),
            k3: target.k3 * rng.gen_range(0.8..1.2),
            damping: target.damping * rng.gen_range(0.8..1.2),
            ..target.clone()
        });
    }
    Ok(WorldModels {
        distractors,
        ..base.clone()
    })
}
