//! Action features shared by the learned forecasters.

use nalgebra::Rotation3;

use crate::tactile::{clm_predict, contact_visible, ClmModel, CONTACT_THRESHOLD};
use crate::error::Result;
use crate::types::{Pose, TactileFrame, Vec3};

pub const ACTION_DIMS: usize = 6;

/// Pose expressed relative to `anchor`: translation in the anchor frame and
/// the rotation vector of `anchor^-1 * pose`.
pub fn pose_delta(anchor: &Pose, pose: &Pose) -> [f64; ACTION_DIMS] {
    let ra: Rotation3<f64> = anchor.rotation();
    let dp: Vec3 = ra.inverse() * (pose.translation() - anchor.translation());
    let dr = (ra.inverse() * pose.rotation()).scaled_axis();
    [dp.x, dp.y, dp.z, dr.x, dr.y, dr.z]
}

/// Per-dimension scale for the deltas; guards against zero spread.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActionScale(pub [f64; ACTION_DIMS]);

impl ActionScale {
    pub fn unit() -> Self {
        Self([1.0; ACTION_DIMS])
    }

    /// Root-mean-square of each dimension over `deltas`.
    pub fn fit<'a>(deltas: impl Iterator<Item = &'a [f64; ACTION_DIMS]>) -> Self {
        let mut acc = [0.0; ACTION_DIMS];
        let mut n = 0usize;
        for d in deltas {
            for k in 0..ACTION_DIMS {
                acc[k] += d[k] * d[k];
            }
            n += 1;
        }
        let mut out = [1.0; ACTION_DIMS];
        for k in 0..ACTION_DIMS {
            let rms = (acc[k] / n.max(1) as f64).sqrt();
            out[k] = if rms > 1e-9 { rms } else { 1.0 };
        }
        Self(out)
    }

    pub fn apply(&self, d: &[f64; ACTION_DIMS]) -> [f64; ACTION_DIMS] {
        let mut out = [0.0; ACTION_DIMS];
        for k in 0..ACTION_DIMS {
            out[k] = d[k] / self.0[k];
        }
        out
    }
}

/// Normalized deltas of every pose relative to `anchor`.
pub fn encode_poses(anchor: &Pose, poses: &[Pose], scale: &ActionScale) -> Vec<[f64; ACTION_DIMS]> {
    poses.iter().map(|p| scale.apply(&pose_delta(anchor, p))).collect()
}

/// Contact location per frame: the CLM output where a contact is visible.
pub fn measure_frames(frames: &[TactileFrame], clm: &ClmModel) -> Result<Vec<Option<f64>>> {
    frames
        .iter()
        .map(|f| {
            if contact_visible(f, CONTACT_THRESHOLD) {
                clm_predict(clm, f).map(Some)
            } else {
                Ok(None)
            }
        })
        .collect()
}

/// Gap-filled context: leading gaps take the first measurement, later
/// gaps repeat the previous one. `None` if nothing was measured.
pub fn fill_context(measured: &[Option<f64>]) -> Option<Vec<f64>> {
    let first = measured.iter().flatten().copied().next()?;
    let mut last = first;
    Some(
        measured
            .iter()
            .map(|m| {
                if let Some(v) = m {
                    last = *v;
                }
                last
            })
            .collect(),
    )
}
