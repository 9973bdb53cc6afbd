//! Approximate-time pairing of the 60 Hz tactile stream with the
//! high-rate robot state stream.

use crate::error::{ensure, Error, Result};
use crate::types::{Action, SyncedSample, TactileFrame};

pub const DEFAULT_TOLERANCE: f64 = 0.010;

#[derive(Clone, Debug, PartialEq)]
pub struct SyncReport {
    pub samples: Vec<SyncedSample>,
    /// Frames with no action inside the tolerance.
    pub dropped: usize,
}

fn check_sorted(times: impl Iterator<Item = f64>, field: &str, strict: bool) -> Result<()> {
    let mut prev = f64::NEG_INFINITY;
    for (i, t) in times.enumerate() {
        ensure(t.is_finite(), field, || format!("timestamp {i} is not finite"))?;
        let ok = if strict { t > prev } else { t >= prev };
        ensure(ok, field, || format!("timestamps not increasing at index {i}"))?;
        prev = t;
    }
    Ok(())
}

/// Index of the action nearest to `t`; ties go to the earlier action.
pub fn nearest_index(actions: &[Action], t: f64) -> usize {
    let i = actions.partition_point(|a| a.timestamp < t);
    if i == 0 {
        return 0;
    }
    if i == actions.len() {
        return actions.len() - 1;
    }
    let before = t - actions[i - 1].timestamp;
    let after = actions[i].timestamp - t;
    if after < before {
        i
    } else {
        i - 1
    }
}

/// Pair each frame with the nearest action; drop frames whose nearest action
/// is farther than `tolerance`.
pub fn synchronize(
    frames: &[TactileFrame],
    actions: &[Action],
    tolerance: f64,
) -> Result<SyncReport> {
    if actions.is_empty() {
        return Err(Error::Unsynchronizable("action stream is empty".into()));
    }
    ensure(tolerance >= 0.0, "tolerance", || format!("{tolerance} < 0"))?;
    check_sorted(frames.iter().map(|f| f.timestamp), "frames", false)?;
    check_sorted(actions.iter().map(|a| a.timestamp), "actions", false)?;

    let mut samples = Vec::with_capacity(frames.len());
    let mut dropped = 0;
    for frame in frames {
        let action = actions[nearest_index(actions, frame.timestamp)];
        let skew = (frame.timestamp - action.timestamp).abs();
        if skew <= tolerance {
            samples.push(SyncedSample {
                frame: frame.clone(),
                action,
                skew,
            });
        } else {
            dropped += 1;
        }
    }
    Ok(SyncReport { samples, dropped })
}

/// Downsample to a uniform grid at `rate_hz`, taking the nearest source sample.
///
/// Output length is `floor(duration * rate_hz) + 1` and timestamps are the
/// grid times `t0 + k / rate_hz`.
pub fn resample_actions(actions: &[Action], rate_hz: f64) -> Result<Vec<Action>> {
    ensure(rate_hz.is_finite() && rate_hz > 0.0, "rate_hz", || {
        format!("{rate_hz} is not a positive rate")
    })?;
    check_sorted(actions.iter().map(|a| a.timestamp), "actions", true)?;
    if actions.len() < 2 {
        return Ok(actions.to_vec());
    }
    let t0 = actions[0].timestamp;
    let duration = actions[actions.len() - 1].timestamp - t0;
    let source_rate = (actions.len() - 1) as f64 / duration;
    ensure(rate_hz <= source_rate * (1.0 + 1e-9), "rate_hz", || {
        format!("{rate_hz} Hz exceeds the source rate {source_rate:.3} Hz")
    })?;
    // the small epsilon absorbs representation error in duration * rate
    let n = (duration * rate_hz + 1e-9).floor() as usize + 1;
    Ok((0..n)
        .map(|k| {
            let t = t0 + k as f64 / rate_hz;
            Action {
                pose: actions[nearest_index(actions, t)].pose,
                timestamp: t,
            }
        })
        .collect())
}
