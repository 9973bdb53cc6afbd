mod common;

use stempush::control::TrajectoryKind;
use stempush::simworld::{
    closest_approach, make_cluster, rollout, stem_energy, step, approach_pose, Event, RolloutConfig, StemState,
    WorldModels, WorldState,
};
use stempush::control::{OpenLoop, TrajectorySpec};
use stempush::{Pose, SimRng, Twist, Vec3};

use common::{push, renderer, Constant};

fn far_away() -> Pose {
    Pose::new([1.0, 1.0, 1.0], [0.0; 3])
}

/// Step the world under the reference of `spec` sampled at every physics tick.
fn drive(spec: &TrajectorySpec, initial: &WorldState, world: &WorldModels, dt: f64, until: f64) -> Vec<WorldState> {
    let n = (until / dt).round() as usize;
    let mut s = initial.clone();
    let mut out = vec![s.clone()];
    for k in 0..n {
        let twist = spec.reference_twist(k as f64 * dt).twist;
        s = step(&s, &twist, dt, world).unwrap().next;
        out.push(s.clone());
    }
    out
}

#[test]
fn rest_without_contact_is_an_equilibrium() {
    let world = WorldModels::default();
    let s = WorldState::at_rest(&world, far_away());
    let r = step(&s, &Twist::zero(), 0.001, &world).unwrap();
    assert_eq!(r.next.stem, s.stem);
    assert_eq!(r.next.ee_pose, s.ee_pose);
    assert_eq!(r.next.time, 0.001);
    assert!(r.events.is_empty());
    let c = r.next.stem.contact;
    assert_eq!((c.normal_force, c.tangential_force, c.penetration), (0.0, 0.0, 0.0));
}

#[test]
fn free_response_loses_energy_every_step() {
    let world = WorldModels::default();
    let mut s = WorldState::at_rest(&world, far_away());
    s.stem.q = [0.3, -0.15];
    let g = world.gravity();
    let mut e = stem_energy(&world.stem, &s.stem, &g);
    let e0 = e;
    // rounding allowance once the stem has all but stopped
    let slack = 1e-12 * e0;
    for _ in 0..3000 {
        s = step(&s, &Twist::zero(), 0.001, &world).unwrap().next;
        let next = stem_energy(&world.stem, &s.stem, &g);
        assert!(next <= e + slack, "energy rose from {e} to {next} at t = {}", s.time);
        e = next;
    }
    assert!(e < 0.05 * e0);
}

#[test]
fn sticking_holds_the_attachment_and_sliding_sits_on_the_friction_cone() {
    let world_friction = WorldModels::default().friction;
    let (mut stick, mut slip) = (0, 0);
    for (seed, u) in [(1, 0.3), (2, 0.5), (3, 0.75), (4, 0.2)] {
        let sc = push(TrajectoryKind::LinearBangBang, u, false, seed);
        let states = drive(&sc.spec, &sc.initial, &sc.models, 0.001, sc.rollout.duration);
        for w in states.windows(2) {
            let (a, b) = (&w[0].stem, &w[1].stem);
            let c = b.contact;
            if !c.in_contact {
                continue;
            }
            if c.sticking {
                let mu = if a.is_sliding() { world_friction.mu_kinetic } else { world_friction.mu_static };
                assert!(c.tangential_force.abs() <= mu * c.normal_force * (1.0 + 1e-12));
                if a.contact.in_contact {
                    stick += 1;
                    assert_eq!(b.u_att, a.u_att, "attachment moved while sticking at t = {}", w[1].time);
                }
            } else {
                slip += 1;
                let bound = world_friction.mu_kinetic * c.normal_force;
                assert!((c.tangential_force.abs() - bound).abs() < 1e-9, "{} vs {bound}", c.tangential_force);
            }
        }
    }
    assert!(stick > 100 && slip > 10, "stick {stick}, slip {slip}");
}

/// Largest stem-angle gap between a run at `dt` and one at `dt / 2`,
/// compared at the coarse ticks.
fn halving_gap(sc: &stempush::bench::Scenario, dt: f64, until: f64) -> f64 {
    let coarse = drive(&sc.spec, &sc.initial, &sc.models, dt, until);
    let fine = drive(&sc.spec, &sc.initial, &sc.models, dt / 2.0, until);
    coarse
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let f = &fine[2 * k];
            (s.stem.q[0] - f.stem.q[0]).abs().max((s.stem.q[1] - f.stem.q[1]).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn halving_the_step_changes_the_trajectory_by_less_than_a_milliradian() {
    let world = WorldModels::default();
    let mut free = push(TrajectoryKind::LinearBangBang, 0.5, false, 5);
    free.initial = WorldState::at_rest(&world, far_away());
    free.initial.stem.q = [0.2, 0.1];
    free.spec.v_max = 1e-9;
    let gap = halving_gap(&free, 0.001, 1.0);
    assert!(gap < 1e-3, "free response gap {gap}");

    let sc = push(TrajectoryKind::LinearBangBang, 0.5, false, 5);
    let gap = halving_gap(&sc, 0.001, sc.rollout.duration);
    assert!(gap < 1e-3, "push gap {gap}");
}

fn equilibrium_angle(torque: f64, stem: &stempush::simworld::StemModel, g: f64) -> f64 {
    let f = |th: f64| stem.k1 * th + stem.k3 * th.powi(3) + stem.tip_mass * g * stem.length * th.sin() - torque;
    let (mut lo, mut hi) = (0.0, 1.5);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn steady_push_balances_spring_gravity_and_normal_force() {
    let world = WorldModels::default();
    // square-on approach: the finger axis is perpendicular to the stem plane
    let ee = approach_pose(&world, 0.5, 0.06, Vec3::y(), 0.0, 0.0);
    let p0 = ee.position;
    let spec = TrajectorySpec::linear(p0, ee.orientation, [p0[0], p0[1] + 0.012, p0[2]], ee.orientation, 0.02, 0.2);
    let initial = WorldState::at_rest(&world, ee);
    let states = drive(&spec, &initial, &world, 0.001, spec.duration() + 4.0);
    let end = states.last().unwrap();
    assert!(end.stem.contact.in_contact);
    assert!(end.stem.qdot[0].hypot(end.stem.qdot[1]) < 1e-6, "not at rest");

    let finger_pose = world.finger.world_pose(&end.ee_pose);
    let lever = closest_approach(&world.stem, end.stem.q, &world.finger, &finger_pose).lever;
    let torque = end.stem.contact.normal_force * lever;
    let expected = equilibrium_angle(torque, &world.stem, 9.81);
    let theta = end.stem.deflection();
    assert!(theta > 0.05, "barely deflected: {theta}");
    assert!(((theta - expected) / expected).abs() < 1e-3, "{theta} vs {expected}");
}

#[test]
fn idle_rollout_without_contact() {
    let world = WorldModels::default();
    let r = renderer(32, 0.02);
    let cfg = RolloutConfig {
        duration: 1.0,
        ..RolloutConfig::default()
    };
    let initial = WorldState::at_rest(&world, far_away());
    let log = rollout(&initial, &mut Constant(Twist::zero()), &cfg, &world, &r, &SimRng::new(1)).unwrap();
    assert_eq!(log.physics.len(), 1000);
    assert_eq!(log.ticks.len(), 60);
    assert!(log.ticks.iter().all(|t| t.u_true.is_none()));
    assert!(log.events.is_empty());
}

#[test]
fn contact_is_made_once_before_any_slip() {
    let r = renderer(32, 0.02);
    let world = WorldModels::default();
    for seed in 0..6 {
        let sc = push(TrajectoryKind::LinearBangBang, 0.5, false, seed);
        let mut ol = OpenLoop::new(sc.spec.clone(), world.finger.mount);
        let log = rollout(&sc.initial, &mut ol, &sc.rollout, &sc.models, &r, &SimRng::new(seed)).unwrap();
        let first_slip = log.events.iter().position(|e| e.event == Event::SlipStarted);
        let made: Vec<usize> = log
            .events
            .iter()
            .enumerate()
            .filter(|(_, e)| e.event == Event::ContactMade)
            .map(|(i, _)| i)
            .collect();
        assert!(!made.is_empty(), "seed {seed}: no contact");
        if let Some(s) = first_slip {
            assert_eq!(made.iter().filter(|&&i| i < s).count(), 1, "seed {seed}");
            assert!(made[0] < s);
        }
    }
}

#[test]
fn same_seed_gives_bit_identical_logs() {
    let r = renderer(32, 0.02);
    let sc = push(TrajectoryKind::Arc, 0.4, true, 11);
    let run = || {
        let mut ol = OpenLoop::new(sc.spec.clone(), sc.models.finger.mount);
        rollout(&sc.initial, &mut ol, &sc.rollout, &sc.models, &r, &SimRng::new(sc.seed)).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a, b);
    assert_eq!(a.control_csv_bytes(), b.control_csv_bytes());
    let bits = |l: &stempush::log::RolloutLog| -> Vec<u64> {
        l.physics.iter().flat_map(|p| [p.q[0].to_bits(), p.q[1].to_bits(), p.contact.u.to_bits()]).collect()
    };
    assert_eq!(bits(&a), bits(&b));
}

#[test]
fn invalid_steps_are_rejected() {
    let world = WorldModels::default();
    let s = WorldState::at_rest(&world, far_away());
    assert!(step(&s, &Twist::zero(), 0.0, &world).is_err());
    assert!(step(&s, &Twist::zero(), 0.003, &world).is_err());
    let bad = Twist::from_array([f64::NAN, 0.0, 0.0, 0.0, 0.0, 0.0]);
    assert!(step(&s, &bad, 0.001, &world).is_err());
}

#[test]
fn runaway_state_names_the_field() {
    let world = WorldModels::default();
    let mut s = WorldState::at_rest(&world, far_away());
    s.stem.qdot = [f64::INFINITY, 0.0];
    let err = step(&s, &Twist::zero(), 0.001, &world).unwrap_err().to_string();
    assert!(err.contains("stem.q"), "{err}");
}

#[test]
fn cluster_preconditions() {
    let world = WorldModels::default();
    let ee = approach_pose(&world, 0.5, 0.06, Vec3::y(), 0.5, 0.003);
    let rng = SimRng::new(3);
    assert!(make_cluster(1, 0.03, &world, &ee, &rng).unwrap_err().is_validation());
    assert!(make_cluster(3, 0.0, &world, &ee, &rng).unwrap_err().is_validation());
    assert!(make_cluster(3, -0.01, &world, &ee, &rng).unwrap_err().is_validation());
}

#[test]
fn cluster_geometry_is_reproducible_and_spread() {
    let world = WorldModels::default();
    let ee = approach_pose(&world, 0.5, 0.06, Vec3::y(), 0.5, 0.003);
    let spacing = 0.03;
    let a = make_cluster(3, spacing, &world, &ee, &SimRng::new(8)).unwrap();
    let b = make_cluster(3, spacing, &world, &ee, &SimRng::new(8)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.distractors.len(), 2);
    let anchors: Vec<Vec3> = a.stems().map(|s| s.anchor()).collect();
    for i in 0..anchors.len() {
        for j in i + 1..anchors.len() {
            let d = (anchors[i] - anchors[j]).norm();
            assert!(d >= spacing / 2.0, "stems {i} and {j} are {d} m apart");
        }
    }
    for d in &a.distractors {
        assert!((0.015..=0.035).contains(&d.tip_mass));
    }
}

#[test]
fn cluster_without_distractors_replays_the_single_stem_trial() {
    let r = renderer(32, 0.02);
    let single = push(TrajectoryKind::LinearBangBang, 0.5, false, 21);
    let mut cluster = push(TrajectoryKind::LinearBangBang, 0.5, true, 21);
    assert_eq!(cluster.models.distractors.len(), 2);
    cluster.models = cluster.models.without_distractors();
    cluster.initial.distractors.clear();
    let run = |sc: &stempush::bench::Scenario| {
        let mut ol = OpenLoop::new(sc.spec.clone(), sc.models.finger.mount);
        rollout(&sc.initial, &mut ol, &sc.rollout, &sc.models, &r, &SimRng::new(sc.seed)).unwrap()
    };
    assert_eq!(run(&single), run(&cluster));
}

#[test]
fn distractors_reach_the_finger_during_cluster_pushes() {
    let touched = (0..5).any(|seed| {
        let sc = push(TrajectoryKind::LinearBangBang, 0.5, true, seed);
        drive(&sc.spec, &sc.initial, &sc.models, 0.001, sc.rollout.duration)
            .iter()
            .any(|s| s.distractors.iter().any(|d: &StemState| d.contact.in_contact))
    });
    assert!(touched);
}
