//! Randomized push scenarios: a stem, a finger approach in a chosen contact
//! zone, and a reference trajectory through it.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::control::{TrajectoryKind, TrajectorySpec};
use crate::error::{ensure, Result};
use crate::rng::SimRng;
use crate::simworld::{approach_pose, make_cluster, RolloutConfig, WorldModels, WorldState};
use crate::types::Vec3;

use super::metrics::Zone;

/// Closed sampling interval.
pub type Range = [f64; 2];

fn sample(rng: &mut SimRng, r: Range) -> f64 {
    if r[1] > r[0] {
        rng.gen_range(r[0]..=r[1])
    } else {
        r[0]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Height of the contact below the stem anchor, m.
    pub lever: Range,
    /// Finger yaw away from square-on, rad. Drives the contact along the finger.
    pub yaw: Range,
    /// Draw the yaw sign at random, so the drift may head for the tip or
    /// the base; otherwise the yaw is positive (drift toward the base).
    pub random_yaw_sign: bool,
    /// Relative jitter of the stem spring and damping.
    pub stiffness_jitter: f64,
    pub tip_mass: Range,
    /// Gap between membrane and stem at the start, m.
    pub standoff: f64,
    pub push_distance: Range,
    pub v_max: f64,
    pub a_max: f64,
    /// Extra height gained over an arc, m.
    pub arc_rise: Range,
    pub arc_radius: f64,
    /// Time simulated after the reference ends, s.
    pub settle: f64,
    pub cluster_size: usize,
    /// m
    pub cluster_spacing: f64,
    /// Margin kept from the zone bounds when drawing the initial location.
    pub zone_margin: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            lever: [0.05, 0.07],
            yaw: [0.5, 0.7],
            random_yaw_sign: true,
            stiffness_jitter: 0.15,
            tip_mass: [0.02, 0.03],
            standoff: 0.003,
            push_distance: [0.05, 0.07],
            v_max: 0.08,
            a_max: 0.5,
            arc_rise: [0.01, 0.02],
            arc_radius: 0.08,
            settle: 0.3,
            cluster_size: 3,
            cluster_spacing: 0.03,
            zone_margin: 0.02,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, r) in [
            ("scenario.lever", self.lever),
            ("scenario.yaw", self.yaw),
            ("scenario.tip_mass", self.tip_mass),
            ("scenario.push_distance", self.push_distance),
            ("scenario.arc_rise", self.arc_rise),
        ] {
            ensure(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1], name, || {
                format!("[{}, {}] is not an interval", r[0], r[1])
            })?;
        }
        ensure(self.lever[0] > 0.0, "scenario.lever", || "must be positive".into())?;
        ensure(self.tip_mass[0] > 0.0, "scenario.tip_mass", || "must be positive".into())?;
        ensure(self.push_distance[0] > 0.0, "scenario.push_distance", || "must be positive".into())?;
        ensure(self.arc_rise[0] > 0.0, "scenario.arc_rise", || "arcs must end higher than they start".into())?;
        ensure((0.0..1.0).contains(&self.stiffness_jitter), "scenario.stiffness_jitter", || {
            "must lie in [0, 1)".into()
        })?;
        ensure(self.standoff >= 0.0, "scenario.standoff", || "must be non-negative".into())?;
        ensure(self.v_max > 0.0 && self.a_max > 0.0, "scenario.v_max", || "speed limits must be positive".into())?;
        ensure(self.settle >= 0.0, "scenario.settle", || "must be non-negative".into())?;
        ensure(self.cluster_size >= 2, "scenario.cluster_size", || "a cluster has at least 2 stems".into())?;
        ensure(self.cluster_spacing > 0.0, "scenario.cluster_spacing", || "must be positive".into())?;
        ensure((0.0..0.05).contains(&self.zone_margin), "scenario.zone_margin", || "must lie in [0, 0.05)".into())
    }

    /// Interval the initial location is drawn from.
    pub fn zone_range(&self, zone: Zone) -> Range {
        let ((lo, _), (hi, _)) = zone.bounds();
        [lo + self.zone_margin, hi - self.zone_margin]
    }
}

/// A fully specified trial, before any controller is chosen.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub models: WorldModels,
    pub initial: WorldState,
    pub spec: TrajectorySpec,
    pub rollout: RolloutConfig,
    pub initial_u: f64,
    pub seed: u64,
}

/// Build a scenario from `seed`. The target stem, approach and trajectory
/// depend only on `(kind, initial_u range, seed)`, so a cluster variant
/// keeps the single-stem layout and only adds distractors.
pub fn build_scenario(
    base: &WorldModels,
    cfg: &ScenarioConfig,
    kind: TrajectoryKind,
    u_range: Range,
    cluster: bool,
    rollout: &RolloutConfig,
    seed: u64,
) -> Result<Scenario> {
    cfg.validate()?;
    let root = SimRng::new(seed);
    let mut rng = root.split("scenario");
    let mut models = base.clone();
    let initial_u = sample(&mut rng, u_range);
    let lever = sample(&mut rng, cfg.lever);
    let mut yaw = sample(&mut rng, cfg.yaw);
    if cfg.random_yaw_sign && rng.gen_bool(0.5) {
        yaw = -yaw;
    }
    let j = cfg.stiffness_jitter;
    let stem = &mut models.stem;
    if j > 0.0 {
        stem.k1 *= rng.gen_range(1.0 - j..=1.0 + j);
        stem.k3 *= rng.gen_range(1.0 - j..=1.0 + j);
        stem.damping *= rng.gen_range(1.0 - j..=1.0 + j);
    }
    stem.tip_mass = sample(&mut rng, cfg.tip_mass);
    let distance = sample(&mut rng, cfg.push_distance);
    let rise = sample(&mut rng, cfg.arc_rise);
    models.validate()?;

    let ee = approach_pose(&models, initial_u, lever, Vec3::y(), yaw, cfg.standoff);
    let p0 = ee.position;
    let spec = match kind {
        TrajectoryKind::LinearBangBang => {
            let pf = [p0[0], p0[1] + distance, p0[2]];
            TrajectorySpec::linear(p0, ee.orientation, pf, ee.orientation, cfg.v_max, cfg.a_max)
        }
        TrajectoryKind::Arc => {
            let pf = [p0[0], p0[1] + distance, p0[2] + rise];
            TrajectorySpec::arc_through(p0, ee.orientation, pf, ee.orientation, cfg.arc_radius, [0.0, 0.0, 1.0], cfg.v_max)?
        }
    };
    spec.validate()?;
    if cluster {
        models = make_cluster(cfg.cluster_size, cfg.cluster_spacing, &models, &ee, &root)?;
    }
    let initial = WorldState::at_rest(&models, ee);
    let rollout = RolloutConfig {
        duration: spec.duration() + cfg.settle,
        ..rollout.clone()
    };
    rollout.validate()?;
    Ok(Scenario {
        models,
        initial,
        spec,
        rollout,
        initial_u,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cluster_keeps_the_target_layout() {
        let base = WorldModels::default();
        let cfg = ScenarioConfig::default();
        let r = RolloutConfig::default();
        let single = build_scenario(&base, &cfg, TrajectoryKind::LinearBangBang, [0.4, 0.6], false, &r, 9).unwrap();
        let multi = build_scenario(&base, &cfg, TrajectoryKind::LinearBangBang, [0.4, 0.6], true, &r, 9).unwrap();
        assert_eq!(single.models.stem, multi.models.stem);
        assert_eq!(single.spec, multi.spec);
        assert_eq!(multi.models.distractors.len(), cfg.cluster_size - 1);
    }

    #[test]
    fn arcs_rise() {
        let s = build_scenario(
            &WorldModels::default(),
            &ScenarioConfig::default(),
            TrajectoryKind::Arc,
            [0.5, 0.5],
            false,
            &RolloutConfig::default(),
            1,
        )
        .unwrap();
        assert!(s.spec.pf[2] > s.spec.p0[2]);
    }
}
