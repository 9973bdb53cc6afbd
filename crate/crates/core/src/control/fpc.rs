//! Horizon error and residual action of the functional predictive controller.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainSchedule {
    /// Proportional gain per horizon index, (rad/s) per unit of u.
    pub kp: Vec<f64>,
    /// Derivative gain per horizon index, (rad/s) per (unit of u / s).
    pub kd: Vec<f64>,
}

impl GainSchedule {
    /// Default per-index gains, tuned on single-stem linear pushes.
    pub const DEFAULT_KP: f64 = 1.5;
    pub const DEFAULT_KD: f64 = 0.0;

    pub fn uniform(horizon: usize, kp: f64, kd: f64) -> Self {
        Self {
            kp: vec![kp; horizon],
            kd: vec![kd; horizon],
        }
    }

    pub fn len(&self) -> usize {
        self.kp.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kp.is_empty()
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            kp: self.kp.iter().map(|k| k * alpha).collect(),
            kd: self.kd.iter().map(|k| k * alpha).collect(),
        }
    }

    pub fn validate(&self, horizon: usize) -> Result<()> {
        ensure(self.kp.len() == horizon && self.kd.len() == horizon, "gains", || {
            format!(
                "expected {horizon} gains per term, got kp {} and kd {}",
                self.kp.len(),
                self.kd.len()
            )
        })?;
        ensure(
            self.kp.iter().chain(&self.kd).all(|k| k.is_finite() && *k >= 0.0),
            "gains",
            || "gains must be finite and non-negative".into(),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorHorizon {
    pub e: Vec<f64>,
    pub e_dot: Vec<f64>,
}

/// `e_i = s_hat_i - s_t`; `e_dot` differences against the previous horizon
/// index by index, zero without one.
pub fn error_horizon(s_hat: &[f64], s_t: f64, prev: Option<&ErrorHorizon>, tick: f64) -> Result<ErrorHorizon> {
    ensure((0.0..=1.0).contains(&s_t), "s_t", || format!("{s_t} outside [0, 1]"))?;
    ensure(tick > 0.0, "tick", || "must be positive".into())?;
    let e: Vec<f64> = s_hat.iter().map(|s| s - s_t).collect();
    let e_dot = match prev {
        Some(p) => {
            ensure(p.e.len() == e.len(), "prev", || "horizon length changed".into())?;
            e.iter().zip(&p.e).map(|(now, before)| (now - before) / tick).collect()
        }
        None => vec![0.0; e.len()],
    };
    Ok(ErrorHorizon { e, e_dot })
}

/// `-sum_i (kp_i e_i + kd_i e_dot_i)`, before saturation.
pub fn residual_action(err: &ErrorHorizon, gains: &GainSchedule) -> Result<f64> {
    let n = err.e.len();
    ensure(err.e_dot.len() == n, "error_horizon", || "e and e_dot lengths differ".into())?;
    ensure(gains.kp.len() == n && gains.kd.len() == n, "gains", || {
        format!("horizon has {n} entries, gains have {} / {}", gains.kp.len(), gains.kd.len())
    })?;
    let mut sum = 0.0;
    for i in 0..n {
        sum += gains.kp[i] * err.e[i] + gains.kd[i] * err.e_dot[i];
    }
    Ok(-sum)
}
