mod common;

use rand::Rng;
use stempush::bench::{build_scenario, run_trial, Scenario, ScenarioConfig, Toolkit};
use stempush::control::{
    contact_axis, error_horizon, pd_tick, residual_action, ControlCommand, ControllerKind, ErrorHorizon, GainSchedule,
    PdGains, TrajectoryKind, TrajectorySpec, DEFAULT_RESIDUAL_LIMIT,
};
use stempush::forecast::{Predictor, PredictorConfig, StateTfm};
use stempush::simworld::{approach_pose, step, RolloutConfig, WorldModels, WorldState};
use stempush::tactile::{ClmModel, Renderer};
use stempush::{SimRng, Twist, Vec3};

use common::{push, renderer};

const EXACT: f64 = 1e-12;

fn close(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < EXACT)
}

#[test]
fn horizon_error_examples() {
    let e = error_horizon(&[0.4; 10], 0.4, None, 1.0 / 60.0).unwrap();
    assert_eq!(e.e, vec![0.0; 10]);
    assert_eq!(e.e_dot, vec![0.0; 10]);

    let e = error_horizon(&[0.6, 0.7], 0.5, None, 1.0 / 60.0).unwrap();
    assert!(close(&e.e, &[0.1, 0.2]), "{:?}", e.e);

    let prev = ErrorHorizon {
        e: vec![0.1, 0.2],
        e_dot: vec![0.0, 0.0],
    };
    let e = error_horizon(&[0.7, 0.7], 0.5, Some(&prev), 1.0 / 60.0).unwrap();
    assert!((e.e_dot[0] - 6.0).abs() < 1e-9 && e.e_dot[1].abs() < 1e-9, "{:?}", e.e_dot);
}

#[test]
fn horizon_error_rejects_bad_inputs() {
    assert!(error_horizon(&[0.5], 1.5, None, 0.01).is_err());
    assert!(error_horizon(&[0.5], 0.5, None, 0.0).is_err());
    let prev = ErrorHorizon {
        e: vec![0.0; 3],
        e_dot: vec![0.0; 3],
    };
    assert!(error_horizon(&[0.5; 2], 0.5, Some(&prev), 0.01).is_err());
}

#[test]
fn residual_examples() {
    let zero = ErrorHorizon {
        e: vec![0.0; 10],
        e_dot: vec![0.0; 10],
    };
    let gains = GainSchedule::uniform(10, 0.5, 0.0);
    assert_eq!(residual_action(&zero, &gains).unwrap(), 0.0);
    let err = ErrorHorizon {
        e: vec![0.1; 10],
        e_dot: vec![0.0; 10],
    };
    assert!((residual_action(&err, &gains).unwrap() + 0.5).abs() < EXACT);
    assert!(residual_action(&err, &GainSchedule::uniform(9, 0.5, 0.0)).unwrap_err().is_validation());
}

fn random_case(rng: &mut SimRng) -> (ErrorHorizon, GainSchedule) {
    let n = rng.gen_range(1..=20);
    let e = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let e_dot = (0..n).map(|_| rng.gen_range(-60.0..60.0)).collect();
    let kp = (0..n).map(|_| rng.gen_range(0.0..5.0)).collect();
    let kd = (0..n).map(|_| rng.gen_range(0.0..0.5)).collect();
    (ErrorHorizon { e, e_dot }, GainSchedule { kp, kd })
}

#[test]
fn residual_is_the_negated_weighted_sum() {
    let mut rng = SimRng::new(2024);
    for _ in 0..1000 {
        let (err, gains) = random_case(&mut rng);
        let mut literal = 0.0;
        for i in (0..err.e.len()).rev() {
            literal -= gains.kd[i] * err.e_dot[i];
            literal -= gains.kp[i] * err.e[i];
        }
        let got = residual_action(&err, &gains).unwrap();
        assert!((got - literal).abs() < EXACT, "{got} vs {literal}");
    }
}

#[test]
fn residual_is_homogeneous_in_gains_and_errors() {
    let mut rng = SimRng::new(7);
    for _ in 0..1000 {
        let (err, gains) = random_case(&mut rng);
        let alpha: f64 = rng.gen_range(-3.0..3.0);
        let base = residual_action(&err, &gains).unwrap();
        let scaled = residual_action(&err, &gains.scaled(alpha.abs())).unwrap();
        assert!((scaled - alpha.abs() * base).abs() < EXACT * (1.0 + base.abs()));
        let err_scaled = ErrorHorizon {
            e: err.e.iter().map(|v| v * alpha).collect(),
            e_dot: err.e_dot.iter().map(|v| v * alpha).collect(),
        };
        let lin = residual_action(&err_scaled, &gains).unwrap();
        assert!((lin - alpha * base).abs() < EXACT * (1.0 + base.abs()));
        let zero = ErrorHorizon {
            e: vec![0.0; err.e.len()],
            e_dot: vec![0.0; err.e.len()],
        };
        assert_eq!(residual_action(&zero, &gains).unwrap(), 0.0);
    }
}

#[test]
fn pd_examples() {
    let gains = PdGains { kp: 5.0, kd: 0.0 };
    let (a, e) = pd_tick(0.4, 0.4, None, &gains, 1.0 / 60.0);
    assert_eq!((a, e), (0.0, 0.0));
    let (a, _) = pd_tick(0.5, 0.4, Some(0.0), &gains, 1.0 / 60.0);
    assert!((a + 0.5).abs() < EXACT, "{a}");
}

#[test]
fn bang_bang_profiles() {
    let tri = TrajectorySpec::linear([0.0; 3], [0.0; 3], [0.2, 0.0, 0.0], [0.0; 3], 1.0, 0.8);
    assert!((tri.duration() - 1.0).abs() < EXACT);
    let trap = TrajectorySpec::linear([0.0; 3], [0.0; 3], [0.2, 0.0, 0.0], [0.0; 3], 0.2, 0.8);
    assert!((trap.duration() - 1.25).abs() < EXACT);
    let peak = trap.reference_twist(0.6).twist.linear[0];
    assert!((peak - 0.2).abs() < EXACT);
    assert_eq!(trap.reference_twist(0.0).twist.linear, [0.0; 3]);
    let end = trap.reference_twist(1.3);
    assert!(end.finished);
    assert_eq!(end.twist, Twist::zero());
    assert!(trap.reference_twist(-0.1).finished);
}

#[test]
fn arcs_stay_on_their_circle() {
    let spec = TrajectorySpec::arc_through(
        [0.1, 0.0, 0.2],
        [0.0; 3],
        [0.1, 0.06, 0.215],
        [0.0, 0.0, 0.2],
        0.08,
        [0.0, 0.0, 1.0],
        0.08,
    )
    .unwrap();
    let c = Vec3::from(spec.center.unwrap());
    let r = (Vec3::from(spec.p0) - c).norm();
    for k in 0..=200 {
        let t = spec.duration() * k as f64 / 200.0;
        let p = Vec3::from(spec.pose_at(t).position);
        assert!(((p - c).norm() - r).abs() < 1e-9, "t = {t}");
    }
    let end = spec.pose_at(spec.duration()).position;
    for i in 0..3 {
        assert!((end[i] - spec.pf[i]).abs() < 1e-9);
    }
    // constant speed
    let v0 = Vec3::from(spec.reference_twist(0.01).twist.linear).norm();
    let v1 = Vec3::from(spec.reference_twist(0.5 * spec.duration()).twist.linear).norm();
    assert!((v0 - 0.08).abs() < 1e-9 && (v1 - 0.08).abs() < 1e-9);
}

fn untrained_clm(size: usize) -> ClmModel {
    ClmModel::new(size, &mut SimRng::new(1)).unwrap()
}

fn toolkit<'a>(clm: &'a ClmModel, predictor: &'a Predictor, renderer: &'a Renderer) -> Toolkit<'a> {
    Toolkit {
        clm,
        predictor,
        renderer,
        pd: PdGains::default(),
        dfpc: GainSchedule::uniform(predictor.config().horizon, 1.5, 0.0),
        residual_limit: DEFAULT_RESIDUAL_LIMIT,
    }
}

/// A square-on push: the stem is met head-on and never slides.
fn square_push(seed: u64) -> Scenario {
    let cfg = ScenarioConfig {
        yaw: [0.0, 0.0],
        random_yaw_sign: false,
        ..ScenarioConfig::default()
    };
    build_scenario(
        &WorldModels::default(),
        &cfg,
        TrajectoryKind::LinearBangBang,
        [0.5, 0.5],
        false,
        &RolloutConfig::default(),
        seed,
    )
    .unwrap()
}

#[test]
fn perfect_oracle_in_a_static_contact_reproduces_open_loop() {
    let r = renderer(32, 0.02);
    let clm = untrained_clm(32);
    let oracle = Predictor::Oracle(PredictorConfig::default());
    let tk = toolkit(&clm, &oracle, &r);
    let sc = square_push(3);
    let ol = run_trial(&sc, ControllerKind::OpenLoop, &tk).unwrap();
    let fpc = run_trial(&sc, ControllerKind::Dfpc, &tk).unwrap();

    let contact: Vec<_> = fpc.contact_ticks().collect();
    assert!(contact.len() > 30, "only {} contact ticks", contact.len());
    assert!(fpc.physics.iter().filter(|p| p.contact.in_contact).all(|p| p.contact.sticking));
    let active = fpc.ticks.iter().filter(|t| t.u_true.is_some() && !t.command.degraded && !t.command.finished);
    assert!(active.count() > 10, "the predictive branch never ran");

    assert_eq!(ol.ticks.len(), fpc.ticks.len());
    for (a, b) in ol.ticks.iter().zip(&fpc.ticks) {
        assert_eq!(a.command.total, b.command.total, "tick {}", a.index);
        assert_eq!(b.command.a_res, 0.0);
        assert_eq!(a.u_true, b.u_true);
    }
    assert_eq!(ol.physics, fpc.physics);
}

#[test]
fn oracle_forecast_is_constant_in_a_frozen_world() {
    use stempush::forecast::{oracle_forecast, OracleView};
    let world = WorldModels::default();
    let ee = approach_pose(&world, 0.5, 0.06, Vec3::y(), 0.0, -0.001);
    let mut s = WorldState::at_rest(&world, ee);
    // settle into contact, then forecast under zero twists
    for _ in 0..3000 {
        s = step(&s, &Twist::zero(), 0.001, &world).unwrap().next;
    }
    let u = s.u_true().expect("in contact");
    let twists = vec![Twist::zero(); 10];
    let view = OracleView {
        state: &s,
        models: &world,
        clock: RolloutConfig::default().clock(),
        frame_index: 0,
        planned_twists: &twists,
    };
    assert_eq!(oracle_forecast(&view, u).unwrap(), vec![u; 10]);
}

#[test]
fn rising_forecast_turns_the_wrist_to_move_the_contact_toward_the_base() {
    let sc = push(TrajectoryKind::LinearBangBang, 0.5, false, 9);
    let world = &sc.models;
    let mut s = sc.initial.clone();
    let mut t = 0.0;
    while s.stem.contact.normal_force < 0.2 {
        s = step(&s, &sc.spec.reference_twist(t).twist, 0.001, world).unwrap().next;
        t += 0.001;
        assert!(t < sc.spec.duration(), "never pressed");
    }
    let before = s.u_true().unwrap();
    // forecast drifting toward the tip
    let err = error_horizon(&[before + 0.05; 10], before, None, 1.0 / 60.0).unwrap();
    let a_res = residual_action(&err, &GainSchedule::uniform(10, 1.5, 0.0)).unwrap();
    assert!(a_res < 0.0);
    let axis = contact_axis(&s.ee_pose, &world.finger.mount);
    let cmd = ControlCommand::new(Twist::zero(), a_res.max(-DEFAULT_RESIDUAL_LIMIT), axis);
    for _ in 0..150 {
        s = step(&s, &cmd.total, 0.001, world).unwrap().next;
    }
    let after = s.u_true().expect("still in contact");
    assert!(after < before - 0.005, "{before} -> {after}");
}

#[test]
fn controllers_share_everything_before_contact() {
    let r = renderer(32, 0.02);
    let clm = untrained_clm(32);
    let oracle = Predictor::Oracle(PredictorConfig::default());
    let tk = toolkit(&clm, &oracle, &r);
    for seed in [1, 2, 3] {
        let sc = push(TrajectoryKind::LinearBangBang, 0.6, false, seed);
        let logs: Vec<_> = ControllerKind::ALL.iter().map(|&c| run_trial(&sc, c, &tk).unwrap()).collect();
        let first = logs[0].first_contact_tick().expect("contact");
        for log in &logs[1..] {
            assert_eq!(log.first_contact_tick(), Some(first));
            let tick = logs[0].ticks[first].physics_tick;
            assert_eq!(log.physics[..tick], logs[0].physics[..tick]);
            for k in 0..first {
                assert_eq!(log.ticks[k].command.total, logs[0].ticks[k].command.total);
                assert_eq!(log.ticks[k].contact, logs[0].ticks[k].contact);
            }
        }
    }
}

#[test]
fn untrained_forecaster_degrades_to_the_reference() {
    let r = renderer(32, 0.02);
    let clm = untrained_clm(32);
    let pcfg = PredictorConfig::default();
    let raw = Predictor::State(StateTfm::new(pcfg, 16, &mut SimRng::new(0)).unwrap());
    let tk = toolkit(&clm, &raw, &r);
    let sc = push(TrajectoryKind::LinearBangBang, 0.5, false, 4);
    let ol = run_trial(&sc, ControllerKind::OpenLoop, &tk).unwrap();
    let fpc = run_trial(&sc, ControllerKind::Dfpc, &tk).unwrap();
    for (a, b) in ol.ticks.iter().zip(&fpc.ticks) {
        assert_eq!(a.command.total, b.command.total);
        if b.u_measured.is_some() && !b.command.finished {
            assert!(b.command.degraded, "tick {}", b.index);
        }
    }
}

#[test]
fn short_context_is_an_error_for_the_forecaster() {
    use stempush::forecast::{predict, ForecastInput};
    use stempush::{Action, Pose};
    let clm = untrained_clm(32);
    let oracle = Predictor::Oracle(PredictorConfig::default());
    let r = renderer(32, 0.0);
    let frames = vec![r.rest_image(); 4];
    let actions = vec![
        Action {
            pose: Pose::identity(),
            timestamp: 0.0
        };
        4
    ];
    let planned = vec![actions[0]; 10];
    let input = ForecastInput {
        context_frames: &frames,
        context_actions: &actions,
        planned_actions: &planned,
        context_s: None,
        oracle: None,
    };
    assert!(predict(&oracle, &input, &clm).unwrap_err().is_validation());
}

#[test]
fn gain_schedules_must_match_the_horizon() {
    let r = renderer(32, 0.02);
    let clm = untrained_clm(32);
    let oracle = Predictor::Oracle(PredictorConfig::default());
    let mut tk = toolkit(&clm, &oracle, &r);
    tk.dfpc = GainSchedule::uniform(5, 1.0, 0.0);
    let sc = push(TrajectoryKind::LinearBangBang, 0.5, false, 1);
    assert!(run_trial(&sc, ControllerKind::Dfpc, &tk).unwrap_err().is_validation());
}
