//! Action-conditioned tactile forward models behind one `predict` call:
//! a video forecaster read out through the CLM, a direct state-space
//! forecaster, and a physics oracle.

mod data;
mod encoding;
mod image_tfm;
mod oracle;
mod state_tfm;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::tactile::{clm_predict, contact_visible, ClmModel, CONTACT_THRESHOLD};
use crate::types::{Action, Pose, TactileFrame};

pub use data::{measure_rollouts, split_rollouts, state_windows, PushRollout, RolloutMeta, Window};
pub use encoding::{encode_poses, fill_context, measure_frames, pose_delta, ActionScale, ACTION_DIMS};
pub use image_tfm::{
    image_horizon_mse, image_windows, self_feed_probability, train_image_tfm, ImageNet, ImageState, ImageTfm,
    ImageTfmHyperparams,
};
pub use oracle::{oracle_forecast, OracleView};
pub use state_tfm::{state_horizon_mae, train_state_tfm, StateTfm, StateTfmHyperparams};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorConfig {
    /// Context frames c.
    pub context: usize,
    /// Forecast frames T - c.
    pub horizon: usize,
    pub frame_hz: f64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            context: 10,
            horizon: 10,
            frame_hz: 60.0,
        }
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<()> {
        ensure(self.context >= 2, "predictor.context", || format!("{} < 2", self.context))?;
        ensure(self.horizon >= 1, "predictor.horizon", || "must be at least one frame".into())?;
        ensure(self.frame_hz > 0.0 && self.frame_hz.is_finite(), "predictor.frame_hz", || {
            "must be positive".into()
        })
    }

    pub fn total(&self) -> usize {
        self.context + self.horizon
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Image,
    State,
    Oracle,
}

impl BackendKind {
    pub fn name(self) -> &'static str {
        match self {
            BackendKind::Image => "image",
            BackendKind::State => "state",
            BackendKind::Oracle => "oracle",
        }
    }
}

impl std::str::FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "image" => Ok(Self::Image),
            "state" => Ok(Self::State),
            "oracle" => Ok(Self::Oracle),
            other => Err(Error::validation("backend", format!("unknown backend `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForecastResult {
    /// One location per horizon frame, in [0, 1].
    pub s_hat: Vec<f64>,
    pub frames_hat: Option<Vec<TactileFrame>>,
    pub backend: BackendKind,
    /// Location at the last context frame the forecast is anchored on.
    pub s_t: f64,
}

/// Everything a backend may read. `context_s` carries CLM readings of the
/// context frames when the caller already has them.
pub struct ForecastInput<'a> {
    pub context_frames: &'a [TactileFrame],
    pub context_actions: &'a [Action],
    pub planned_actions: &'a [Action],
    pub context_s: Option<&'a [Option<f64>]>,
    pub oracle: Option<OracleView<'a>>,
}

#[derive(Clone, Debug)]
pub enum Predictor {
    Image(ImageTfm),
    State(StateTfm),
    Oracle(PredictorConfig),
}

impl Predictor {
    pub fn kind(&self) -> BackendKind {
        match self {
            Predictor::Image(_) => BackendKind::Image,
            Predictor::State(_) => BackendKind::State,
            Predictor::Oracle(_) => BackendKind::Oracle,
        }
    }

    pub fn config(&self) -> &PredictorConfig {
        match self {
            Predictor::Image(m) => &m.cfg,
            Predictor::State(m) => &m.cfg,
            Predictor::Oracle(c) => c,
        }
    }

    pub fn is_ready(&self) -> bool {
        match self {
            Predictor::Image(m) => m.trained,
            Predictor::State(m) => m.trained,
            Predictor::Oracle(_) => true,
        }
    }

    /// Multiply-accumulates of one forecast, excluding the CLM.
    pub fn macs(&self) -> usize {
        match self {
            Predictor::Image(m) => m.macs() * (m.cfg.total() - 1),
            Predictor::State(m) => m.macs(),
            // one physics step is a handful of flops; count a nominal 200 per tick
            Predictor::Oracle(c) => 200 * c.horizon * 17,
        }
    }
}

fn poses(actions: &[Action]) -> Vec<Pose> {
    actions.iter().map(|a| a.pose).collect()
}

/// Forecast the stem location over the horizon.
pub fn predict(predictor: &Predictor, input: &ForecastInput, clm: &ClmModel) -> Result<ForecastResult> {
    let cfg = predictor.config();
    ensure(
        input.context_frames.len() == cfg.context && input.context_actions.len() == cfg.context,
        "context",
        || {
            format!(
                "expected {} context frames and actions, got {} and {}",
                cfg.context,
                input.context_frames.len(),
                input.context_actions.len()
            )
        },
    )?;
    ensure(input.planned_actions.len() == cfg.horizon, "planned_actions", || {
        format!("expected {}, got {}", cfg.horizon, input.planned_actions.len())
    })?;
    if !predictor.is_ready() {
        return Err(Error::ModelNotReady(format!("{} forecaster is untrained", predictor.kind().name())));
    }
    let measured = match input.context_s {
        Some(s) => {
            ensure(s.len() == cfg.context, "context_s", || "length differs from context".into())?;
            s.to_vec()
        }
        None => measure_frames(input.context_frames, clm)?,
    };
    if measured.last().map_or(true, Option::is_none) && predictor.kind() != BackendKind::Oracle {
        return Err(Error::InsufficientContext {
            have: measured.iter().flatten().count(),
            need: 1,
        });
    }
    let context_poses = poses(input.context_actions);
    let planned = poses(input.planned_actions);

    match predictor {
        Predictor::State(m) => {
            let filled = fill_context(&measured).expect("last frame measured");
            Ok(ForecastResult {
                s_hat: m.forecast(&filled, &context_poses, &planned),
                frames_hat: None,
                backend: BackendKind::State,
                s_t: filled[filled.len() - 1],
            })
        }
        Predictor::Image(m) => {
            let s_t = measured[measured.len() - 1].expect("checked");
            let frames = m.forecast_frames(input.context_frames, &context_poses, &planned)?;
            let mut last = s_t;
            let mut s_hat = Vec::with_capacity(frames.len());
            for f in &frames {
                if contact_visible(f, CONTACT_THRESHOLD) {
                    last = clm_predict(clm, f)?;
                }
                s_hat.push(last);
            }
            Ok(ForecastResult {
                s_hat,
                frames_hat: Some(frames),
                backend: BackendKind::Image,
                s_t,
            })
        }
        Predictor::Oracle(_) => {
            let view = input
                .oracle
                .as_ref()
                .ok_or_else(|| Error::validation("oracle", "the physics oracle needs the world state"))?;
            ensure(view.planned_twists.len() == cfg.horizon, "planned_twists", || {
                format!("expected {}, got {}", cfg.horizon, view.planned_twists.len())
            })?;
            let s_t = match (view.state.u_true(), measured.last().copied().flatten()) {
                (Some(u), _) => u,
                (None, Some(m)) => m,
                (None, None) => return Err(Error::NoContact),
            };
            Ok(ForecastResult {
                s_hat: oracle_forecast(view, s_t)?,
                frames_hat: None,
                backend: BackendKind::Oracle,
                s_t,
            })
        }
    }
}
