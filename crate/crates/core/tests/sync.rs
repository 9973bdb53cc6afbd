use proptest::prelude::*;
use stempush::sync::{nearest_index, resample_actions, synchronize, DEFAULT_TOLERANCE};
use stempush::{Action, Error, Pose, TactileFrame};

fn frame(t: f64) -> TactileFrame {
    TactileFrame::new(32, vec![0.0; 32 * 32 * 3], t).unwrap()
}

fn action(t: f64, x: f64) -> Action {
    Action {
        pose: Pose::new([x, 0.0, 0.0], [0.0; 3]),
        timestamp: t,
    }
}

/// Scan every action; the first of equally near ones wins.
fn brute_force(actions: &[Action], t: f64) -> usize {
    let mut best = 0;
    for (i, a) in actions.iter().enumerate() {
        if (a.timestamp - t).abs() < (actions[best].timestamp - t).abs() {
            best = i;
        }
    }
    best
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

proptest! {
    #[test]
    fn pairing_matches_brute_force(
        action_times in prop::collection::vec(0.0..2.0f64, 1..80).prop_map(sorted),
        frame_times in prop::collection::vec(-0.1..2.1f64, 0..40).prop_map(sorted),
        tolerance in 0.0..0.05f64,
    ) {
        let actions: Vec<Action> = action_times.iter().enumerate().map(|(i, &t)| action(t, i as f64)).collect();
        let frames: Vec<TactileFrame> = frame_times.iter().map(|&t| frame(t)).collect();
        let r = synchronize(&frames, &actions, tolerance).unwrap();
        let mut kept = r.samples.iter();
        let mut dropped = 0;
        for f in &frames {
            let i = brute_force(&actions, f.timestamp);
            prop_assert_eq!(nearest_index(&actions, f.timestamp), i);
            let skew = (actions[i].timestamp - f.timestamp).abs();
            if skew <= tolerance {
                let s = kept.next().unwrap();
                prop_assert_eq!(s.action, actions[i]);
                prop_assert_eq!(s.skew, skew);
                prop_assert_eq!(s.frame.timestamp, f.timestamp);
            } else {
                dropped += 1;
            }
        }
        prop_assert!(kept.next().is_none());
        prop_assert_eq!(r.dropped, dropped);
    }
}

#[test]
fn non_monotonic_streams_are_rejected() {
    let actions = [action(0.0, 0.0), action(0.2, 0.0), action(0.1, 0.0)];
    let err = synchronize(&[frame(0.0)], &actions, DEFAULT_TOLERANCE).unwrap_err();
    assert!(err.is_validation() && err.to_string().contains("actions"), "{err}");
    let frames = [frame(0.1), frame(0.05)];
    let err = synchronize(&frames, &actions[..2], DEFAULT_TOLERANCE).unwrap_err();
    assert!(err.to_string().contains("frames"), "{err}");
    assert!(resample_actions(&actions, 10.0).is_err());
    assert!(matches!(synchronize(&[frame(0.0)], &[], 0.01), Err(Error::Unsynchronizable(_))));
}

fn stream_1khz(x: impl Fn(f64) -> f64) -> Vec<Action> {
    (0..=1000).map(|k| k as f64 / 1000.0).map(|t| action(t, x(t))).collect()
}

#[test]
fn one_second_at_1khz_gives_61_samples_at_60hz() {
    let out = resample_actions(&stream_1khz(|_| 0.0), 60.0).unwrap();
    assert_eq!(out.len(), 61);
    for (k, a) in out.iter().enumerate() {
        assert!((a.timestamp - k as f64 / 60.0).abs() < 1e-12);
    }
}

#[test]
fn constant_streams_stay_constant() {
    let out = resample_actions(&stream_1khz(|_| 0.25), 60.0).unwrap();
    assert!(out.iter().all(|a| a.pose.position == [0.25, 0.0, 0.0]));
}

#[test]
fn ramps_stay_within_half_a_source_step() {
    let slope = 0.3;
    let out = resample_actions(&stream_1khz(|t| slope * t), 60.0).unwrap();
    let half_step = 0.5 * slope / 1000.0;
    for a in &out {
        assert!((a.pose.position[0] - slope * a.timestamp).abs() <= half_step + 1e-12, "t = {}", a.timestamp);
    }
}

#[test]
fn upsampling_is_refused() {
    assert!(resample_actions(&stream_1khz(|_| 0.0), 2000.0).unwrap_err().is_validation());
    assert!(resample_actions(&stream_1khz(|_| 0.0), 0.0).is_err());
}
