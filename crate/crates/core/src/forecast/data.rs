//! Training windows cut from open-loop push rollouts.

use serde::{Deserialize, Serialize};

use crate::control::TrajectorySpec;
use crate::error::{ensure, Result};
use crate::tactile::ClmModel;
use crate::types::{Action, Pose, TactileFrame};

use super::encoding::{fill_context, measure_frames};
use super::PredictorConfig;

/// One recorded push: 60 Hz frames with their synced poses, plus the raw
/// pose stream at the physics rate.
#[derive(Clone, Debug, PartialEq)]
pub struct PushRollout {
    pub spec: TrajectorySpec,
    pub meta: RolloutMeta,
    pub frames: Vec<TactileFrame>,
    pub poses: Vec<Pose>,
    pub u_true: Vec<Option<f64>>,
    pub actions: Vec<Action>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutMeta {
    pub index: usize,
    pub zone: String,
    pub seed: u64,
    pub initial_u: f64,
}

/// A context/horizon window ending its context at frame `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    pub rollout: usize,
    pub k: usize,
    pub context_s: Vec<f64>,
    pub target_s: Vec<f64>,
}

/// Measured contact locations per frame of every rollout.
pub fn measure_rollouts(rollouts: &[PushRollout], clm: &ClmModel) -> Result<Vec<Vec<Option<f64>>>> {
    rollouts.iter().map(|r| measure_frames(&r.frames, clm)).collect()
}

/// All windows whose last context frame and every horizon frame show a
/// contact. Targets are measured locations, like the context.
pub fn state_windows(measured: &[Vec<Option<f64>>], cfg: &PredictorConfig, stride: usize) -> Vec<Window> {
    let (c, h) = (cfg.context, cfg.horizon);
    let mut out = Vec::new();
    for (ri, m) in measured.iter().enumerate() {
        if m.len() < c + h {
            continue;
        }
        let mut k = c - 1;
        while k + h < m.len() {
            let ready = m[k].is_some() && m[k + 1..=k + h].iter().all(Option::is_some);
            if ready {
                // gaps before the first contact are filled from the whole prefix
                let prefix = fill_context(&m[..=k]).expect("frame k is measured");
                out.push(Window {
                    rollout: ri,
                    k,
                    context_s: prefix[k + 1 - c..=k].to_vec(),
                    target_s: m[k + 1..=k + h].iter().map(|v| v.expect("checked")).collect(),
                });
            }
            k += stride.max(1);
        }
    }
    out
}

/// Split rollouts into train and held-out sets, every `1/fraction`-th held out.
pub fn split_rollouts(n: usize, holdout_fraction: f64) -> Result<(Vec<usize>, Vec<usize>)> {
    ensure((0.0..1.0).contains(&holdout_fraction), "holdout_fraction", || "must lie in [0, 1)".into())?;
    if holdout_fraction == 0.0 {
        return Ok(((0..n).collect(), Vec::new()));
    }
    let every = (1.0 / holdout_fraction).round().max(2.0) as usize;
    let held: Vec<usize> = (0..n).filter(|i| i % every == every - 1).collect();
    let train: Vec<usize> = (0..n).filter(|i| i % every != every - 1).collect();
    Ok((train, held))
}
