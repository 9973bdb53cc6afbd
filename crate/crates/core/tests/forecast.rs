mod common;

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use sha2::{Digest, Sha256};
use stempush::bench::{generate_push_dataset, load_push_dataset, save_push_dataset, PushDatasetConfig, ScenarioConfig};
use stempush::control::{TrajectoryKind, TrajectorySpec};
use stempush::forecast::{
    image_horizon_mse, image_windows, predict, self_feed_probability, split_rollouts, state_horizon_mae,
    state_windows, train_image_tfm, train_state_tfm, ForecastInput, ImageTfm, ImageTfmHyperparams, Predictor,
    PredictorConfig, PushRollout, RolloutMeta, StateTfm, StateTfmHyperparams,
};
use stempush::simworld::{RolloutConfig, WorldModels};
use stempush::tactile::ClmModel;
use stempush::{Action, Error, Pose, SimRng, TactileFrame};

use common::renderer;

const DT: f64 = 1.0 / 60.0;

/// A rollout of `n` frames with the end effector moving along x at `v[0]`
/// m/frame up to frame 10 and at `v[1]` after, and the contact following `u(k, x)`.
fn synthetic(n: usize, v: [f64; 2], frames: Vec<TactileFrame>, u: impl Fn(usize, f64) -> f64) -> PushRollout {
    let x = |k: usize| v[0] * k.min(10) as f64 + v[1] * k.saturating_sub(10) as f64;
    let poses: Vec<Pose> = (0..n).map(|k| Pose::new([x(k), 0.0, 0.2], [0.0; 3])).collect();
    PushRollout {
        spec: TrajectorySpec::linear([0.0, 0.0, 0.2], [0.0; 3], [0.1, 0.0, 0.2], [0.0; 3], 0.1, 0.5),
        meta: RolloutMeta {
            index: 0,
            zone: "zone1".into(),
            seed: 0,
            initial_u: u(0, 0.0),
        },
        frames,
        u_true: (0..n).map(|k| Some(u(k, poses[k].position[0]))).collect(),
        actions: poses
            .iter()
            .enumerate()
            .map(|(k, p)| Action {
                pose: *p,
                timestamp: k as f64 * DT,
            })
            .collect(),
        poses,
    }
}

/// Drifting contacts: `u = u0 + b k + gain x`.
fn drifting(n_rollouts: usize, gain: f64, seed: u64) -> Vec<PushRollout> {
    let mut rng = SimRng::new(seed);
    (0..n_rollouts)
        .map(|_| {
            let u0 = rng.gen_range(0.3..0.7);
            let b = rng.gen_range(-0.006..0.006);
            let v = [rng.gen_range(-0.002..0.002), rng.gen_range(-0.002..0.002)];
            synthetic(24, v, Vec::new(), move |k, x| u0 + b * k as f64 + gain * x)
        })
        .collect()
}

fn windows_of(rollouts: &[PushRollout], cfg: &PredictorConfig) -> Vec<stempush::forecast::Window> {
    let measured: Vec<Vec<Option<f64>>> = rollouts.iter().map(|r| r.u_true.clone()).collect();
    state_windows(&measured, cfg, 1)
}

fn state_model(gain: f64) -> (StateTfm, Vec<PushRollout>) {
    let cfg = PredictorConfig::default();
    let train = drifting(200, gain, 1);
    let hp = StateTfmHyperparams {
        epochs: 60,
        ..StateTfmHyperparams::default()
    };
    let model = train_state_tfm(&train, &windows_of(&train, &cfg), cfg, &hp, &SimRng::new(2)).unwrap();
    (model, drifting(40, gain, 3))
}

#[test]
fn state_model_learns_linear_drift() {
    let (model, test) = state_model(0.0);
    let cfg = PredictorConfig::default();
    let (mae, persistence) = state_horizon_mae(&model, &test, &windows_of(&test, &cfg));
    assert!(mae < 0.01, "MAE {mae}");
    assert!(mae < persistence);
    let curve = &model.curve.train;
    assert!(curve.last().unwrap() < &curve[0], "{curve:?}");
}

#[test]
fn state_model_responds_to_planned_actions() {
    let (model, _) = state_model(2.0);
    let ctx_s: Vec<f64> = vec![0.5; 10];
    let ctx: Vec<Pose> = (0..10).map(|_| Pose::new([0.0, 0.0, 0.2], [0.0; 3])).collect();
    let plan = |v: f64| -> Vec<Pose> { (1..=10).map(|k| Pose::new([v * k as f64, 0.0, 0.2], [0.0; 3])).collect() };
    let still = model.forecast(&ctx_s, &ctx, &plan(0.0));
    let forward = model.forecast(&ctx_s, &ctx, &plan(0.0015));
    let back = model.forecast(&ctx_s, &ctx, &plan(-0.0015));
    assert!(forward[9] > still[9] + 0.01 && back[9] < still[9] - 0.01, "{back:?} {still:?} {forward:?}");
}

#[test]
fn state_model_checkpoints_round_trip() {
    let (model, test) = state_model(0.0);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("state.ckpt");
    model.save(&path).unwrap();
    let back = StateTfm::load(&path, model.cfg, model.hidden).unwrap();
    let w = &windows_of(&test, &model.cfg)[0];
    let poses = &test[w.rollout].poses;
    let ctx = &poses[w.k + 1 - 10..=w.k];
    let plan = &poses[w.k + 1..=w.k + 10];
    assert_eq!(model.forecast(&w.context_s, ctx, plan), back.forecast(&w.context_s, ctx, plan));
    assert!(StateTfm::load(&path, model.cfg, model.hidden * 2).is_err());
}

fn untrained_image() -> ImageTfm {
    ImageTfm::new(PredictorConfig::default(), 32, &mut SimRng::new(4)).unwrap()
}

fn pushed_frames(n: usize) -> (Vec<TactileFrame>, Vec<Pose>) {
    let r = renderer(32, 0.02);
    let mut noise = SimRng::new(11);
    let frames = (0..n)
        .map(|k| {
            let c = stempush::ContactState {
                in_contact: true,
                u: 0.3 + 0.01 * k as f64,
                penetration: 0.001 + 0.0001 * k as f64,
                normal_force: 1.0,
                tangential_force: 0.0,
                sticking: true,
            };
            r.render(&c, Some(&mut noise), k as f64 * DT)
        })
        .collect();
    let poses = (0..n).map(|k| Pose::new([0.001 * k as f64, 0.0, 0.2], [0.0, 0.0, 0.01 * k as f64])).collect();
    (frames, poses)
}

#[test]
fn untrained_image_model_keeps_shape_and_range() {
    let model = untrained_image();
    let (frames, poses) = pushed_frames(20);
    let out = model.forecast_frames(&frames[..10], &poses[..10], &poses[10..]).unwrap();
    assert_eq!(out.len(), 10);
    for (k, f) in out.iter().enumerate() {
        assert_eq!(f.size, 32);
        assert_eq!(f.pixels.len(), frames[0].pixels.len());
        assert!(f.pixels.iter().all(|p| (0.0..=1.0).contains(p)));
        assert!((f.timestamp - frames[9].timestamp - (k + 1) as f64 * DT).abs() < 1e-12);
    }
    let wrong = renderer(64, 0.0).rest_image();
    assert!(model.forecast_frames(&[wrong], &poses[..1], &poses[1..3]).unwrap_err().is_validation());
}

#[test]
fn image_rollout_is_autoregressive() {
    let model = untrained_image();
    let (frames, poses) = pushed_frames(20);
    let out = model.forecast_frames(&frames[..10], &poses[..10], &poses[10..]).unwrap();

    let anchor = poses[9];
    let ctx_a = model.encode(&anchor, &poses[..10]);
    let plan_a = model.encode(&anchor, &poses[10..]);
    let mut state = model.initial_state();
    for t in 1..10 {
        state = model.step(&state, &frames[t - 1].to_tensor(), &ctx_a[t]).0;
    }
    let mut x = frames[9].to_tensor();
    for (k, a) in plan_a.iter().enumerate() {
        let (s, y) = model.step(&state, &x, a);
        state = s;
        let got = TactileFrame::from_tensor(&y, out[k].timestamp);
        assert_eq!(got, out[k], "step {k}");
        // feed the returned frame, not the raw output
        x = out[k].to_tensor();
    }
}

#[test]
fn predict_checks_lengths_and_readiness() {
    let clm = ClmModel::new(32, &mut SimRng::new(0)).unwrap();
    let (frames, poses) = pushed_frames(20);
    let acts: Vec<Action> = poses
        .iter()
        .enumerate()
        .map(|(k, p)| Action {
            pose: *p,
            timestamp: k as f64 * DT,
        })
        .collect();
    let untrained = Predictor::Image(untrained_image());
    let input = |plan: usize| ForecastInput {
        context_frames: &frames[..10],
        context_actions: &acts[..10],
        planned_actions: &acts[10..10 + plan],
        context_s: None,
        oracle: None,
    };
    assert!(predict(&untrained, &input(9), &clm).unwrap_err().is_validation());
    assert!(matches!(predict(&untrained, &input(10), &clm), Err(Error::ModelNotReady(_))));
    let state = Predictor::State(StateTfm::new(PredictorConfig::default(), 8, &mut SimRng::new(0)).unwrap());
    assert!(matches!(predict(&state, &input(10), &clm), Err(Error::ModelNotReady(_))));
    assert!(!state.is_ready() && !untrained.is_ready());
}

#[test]
fn image_model_learns_a_static_scene() {
    let rest = renderer(32, 0.0).rest_image();
    let rollouts: Vec<PushRollout> = (0..4)
        .map(|_| synthetic(24, [0.0; 2], vec![rest.clone(); 24], |_, _| 0.5))
        .collect();
    let cfg = PredictorConfig::default();
    let hp = ImageTfmHyperparams {
        epochs: 4,
        max_windows: 8,
        ..ImageTfmHyperparams::default()
    };
    let model = train_image_tfm(&rollouts, cfg, &hp, &SimRng::new(5)).unwrap();
    let windows = image_windows(&rollouts, &cfg, 4);
    let (mse, persistence) = image_horizon_mse(&model, &rollouts, &windows).unwrap();
    assert_eq!(persistence, 0.0);
    assert!(mse < 1e-3, "{mse}");
}

#[test]
fn image_training_lowers_the_horizon_error() {
    let (frames, poses) = pushed_frames(24);
    let mut r = synthetic(24, [0.0; 2], frames, |k, _| 0.3 + 0.01 * k as f64);
    r.poses = poses;
    let rollouts = [r];
    let cfg = PredictorConfig::default();
    let hp = ImageTfmHyperparams {
        epochs: 4,
        max_windows: 4,
        batch_size: 1,
        ..ImageTfmHyperparams::default()
    };
    let windows = image_windows(&rollouts, &cfg, hp.window_stride);
    let (before, _) = image_horizon_mse(&untrained_image(), &rollouts, &windows).unwrap();
    let model = train_image_tfm(&rollouts, cfg, &hp, &SimRng::new(6)).unwrap();
    let (after, _) = image_horizon_mse(&model, &rollouts, &windows).unwrap();
    assert!(model.trained);
    assert_eq!(model.curve.train.len(), 4);
    assert!(after < before, "{before} -> {after}");
}

#[test]
fn image_model_checkpoints_round_trip() {
    let mut model = untrained_image();
    model.trained = true;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("image.ckpt");
    model.save(&path).unwrap();
    let back = ImageTfm::load(&path, model.cfg, 32).unwrap();
    let (frames, poses) = pushed_frames(12);
    assert_eq!(
        model.forecast_frames(&frames[..10], &poses[..10], &poses[10..]).unwrap(),
        back.forecast_frames(&frames[..10], &poses[..10], &poses[10..]).unwrap()
    );
    assert!(ImageTfm::load(&path, model.cfg, 64).is_err());
}

#[test]
fn self_feeding_ramps_after_the_first_third() {
    assert_eq!(self_feed_probability(0, 9), 0.0);
    assert_eq!(self_feed_probability(2, 9), 0.0);
    assert_eq!(self_feed_probability(8, 9), 1.0);
    let ramp: Vec<f64> = (0..9).map(|e| self_feed_probability(e, 9)).collect();
    assert!(ramp.windows(2).all(|w| w[1] >= w[0]), "{ramp:?}");
}

#[test]
fn windows_need_contact_through_the_horizon() {
    let cfg = PredictorConfig {
        context: 3,
        horizon: 2,
        frame_hz: 60.0,
    };
    let m = vec![vec![None, Some(0.2), Some(0.3), None, Some(0.4), Some(0.5), Some(0.6)]];
    let w = state_windows(&m, &cfg, 1);
    let ks: Vec<usize> = w.iter().map(|w| w.k).collect();
    assert_eq!(ks, vec![4]);
    assert_eq!(w[0].target_s, vec![0.5, 0.6]);
    // the gap at frame 3 is filled from the prefix
    assert_eq!(w[0].context_s.len(), 3);
    assert_eq!(w[0].context_s[2], 0.4);
    let (train, held) = split_rollouts(10, 0.2).unwrap();
    assert_eq!(held, vec![4, 9]);
    assert_eq!(train.len() + held.len(), 10);
    assert!(split_rollouts(10, 1.0).is_err());
}

fn small_dataset(cfg: &PushDatasetConfig, seed: u64) -> Vec<PushRollout> {
    generate_push_dataset(
        cfg,
        &ScenarioConfig::default(),
        &WorldModels::default(),
        &RolloutConfig::default(),
        &renderer(32, 0.02),
        seed,
    )
    .unwrap()
}

fn dir_hash(dir: &Path) -> String {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                files.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    let mut h = Sha256::new();
    for (name, bytes) in files {
        h.update(name.as_bytes());
        h.update(&bytes);
    }
    hex::encode(h.finalize())
}

#[test]
fn push_dataset_is_reproducible_on_disk() {
    let cfg = PushDatasetConfig {
        n_tasks: 4,
        ..PushDatasetConfig::default()
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let data = small_dataset(&cfg, 21);
    assert_eq!(data.len(), 4);
    save_push_dataset(&data, a.path()).unwrap();
    save_push_dataset(&small_dataset(&cfg, 21), b.path()).unwrap();
    assert_eq!(dir_hash(a.path()), dir_hash(b.path()));
    let back = load_push_dataset(a.path()).unwrap();
    assert_eq!(back.len(), data.len());
    for (x, y) in back.iter().zip(&data) {
        assert_eq!(x.frames, y.frames);
        assert_eq!(x.u_true, y.u_true);
        assert_eq!(x.meta, y.meta);
    }
    let c = tempfile::tempdir().unwrap();
    save_push_dataset(&small_dataset(&cfg, 22), c.path()).unwrap();
    assert_ne!(dir_hash(a.path()), dir_hash(c.path()));
}

#[test]
fn task_mix_follows_the_linear_fraction() {
    let all_linear = PushDatasetConfig {
        n_tasks: 3,
        linear_fraction: 1.0,
        ..PushDatasetConfig::default()
    };
    assert!((0..100).all(|i| all_linear.kind_of(i) == TrajectoryKind::LinearBangBang));
    assert!(small_dataset(&all_linear, 5).iter().all(|r| r.spec.kind == TrajectoryKind::LinearBangBang));
    let half = PushDatasetConfig::default();
    let arcs = (0..100).filter(|&i| half.kind_of(i) == TrajectoryKind::Arc).count();
    assert_eq!(arcs, 50);
    let bad = PushDatasetConfig {
        linear_fraction: 1.5,
        ..PushDatasetConfig::default()
    };
    assert!(bad.validate().is_err());
}
