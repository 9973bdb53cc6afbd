//! The three command sources plugged into the closed loop.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::forecast::{predict, ForecastInput, ForecastResult, OracleView, Predictor};
use crate::simworld::{CommandSource, FrameClock, Observation, TickOutput};
use crate::tactile::{clm_predict, contact_visible, ClmModel, CONTACT_THRESHOLD};
use crate::types::{Action, Pose, TactileFrame, Twist};

use super::command::{contact_axis, saturate, ControlCommand};
use super::fpc::{error_horizon, residual_action, ErrorHorizon, GainSchedule};
use super::trajectory::TrajectorySpec;

/// Nominal cost of one multiply-accumulate, used for the reported
/// per-tick computation time.
pub const NS_PER_MAC: f64 = 1.0;

pub fn cost_ms(macs: usize) -> f64 {
    macs as f64 * NS_PER_MAC * 1e-6
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    #[serde(rename = "openloop")]
    OpenLoop,
    Pd,
    Dfpc,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 3] = [ControllerKind::OpenLoop, ControllerKind::Pd, ControllerKind::Dfpc];

    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::OpenLoop => "openloop",
            ControllerKind::Pd => "pd",
            ControllerKind::Dfpc => "dfpc",
        }
    }
}

impl std::str::FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "openloop" => Ok(Self::OpenLoop),
            "pd" => Ok(Self::Pd),
            "dfpc" => Ok(Self::Dfpc),
            other => Err(Error::validation("controller", format!("unknown controller `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdGains {
    pub kp: f64,
    pub kd: f64,
}

impl Default for PdGains {
    fn default() -> Self {
        Self { kp: 4.0, kd: 0.2 }
    }
}

impl PdGains {
    pub fn validate(&self) -> Result<()> {
        ensure(
            self.kp.is_finite() && self.kd.is_finite() && self.kp >= 0.0 && self.kd >= 0.0,
            "pd",
            || "gains must be finite and non-negative".into(),
        )
    }
}

/// Reference twist of the trajectory at an observation, with the end flag.
fn reference_at(spec: &TrajectorySpec, obs: &Observation, mount: &Pose) -> ControlCommand {
    let r = spec.reference_twist(obs.time);
    let mut cmd = ControlCommand::reference(r.twist, contact_axis(&obs.action.pose, mount));
    cmd.finished = r.finished;
    cmd
}

fn measure(clm: &ClmModel, frame: &TactileFrame) -> Result<Option<f64>> {
    if contact_visible(frame, CONTACT_THRESHOLD) {
        clm_predict(clm, frame).map(Some)
    } else {
        Ok(None)
    }
}

/// Apply a raw residual on top of the reference command.
fn compose(reference: &ControlCommand, raw: f64, limit: f64) -> ControlCommand {
    let (a_res, saturated) = saturate(raw, limit);
    let axis = reference.contact_axis;
    let mut cmd = ControlCommand::new(reference.a_ref, a_res, axis.into());
    cmd.saturated = saturated;
    cmd.finished = reference.finished;
    cmd
}

pub struct OpenLoop {
    spec: TrajectorySpec,
    mount: Pose,
}

impl OpenLoop {
    pub fn new(spec: TrajectorySpec, mount: Pose) -> Self {
        Self { spec, mount }
    }
}

impl CommandSource for OpenLoop {
    fn name(&self) -> &str {
        "openloop"
    }

    fn tick(&mut self, obs: &Observation) -> Result<TickOutput> {
        Ok(TickOutput {
            command: reference_at(&self.spec, obs, &self.mount),
            measured_u: None,
            comp_ms: 0.0,
        })
    }
}

/// PD residual: `e = s_t - s_ref`, `a_res = -(kp e + kd e_dot)`, before
/// saturation. Returns the residual and `e`.
pub fn pd_tick(s_t: f64, s_ref: f64, prev_e: Option<f64>, gains: &PdGains, tick: f64) -> (f64, f64) {
    let e = s_t - s_ref;
    let e_dot = prev_e.map_or(0.0, |p| (e - p) / tick);
    (-(gains.kp * e + gains.kd * e_dot), e)
}

pub struct PdController<'a> {
    spec: TrajectorySpec,
    mount: Pose,
    clm: &'a ClmModel,
    gains: PdGains,
    limit: f64,
    s_ref: Option<f64>,
    prev_e: Option<f64>,
}

impl<'a> PdController<'a> {
    pub fn new(spec: TrajectorySpec, mount: Pose, clm: &'a ClmModel, gains: PdGains, limit: f64) -> Self {
        Self {
            spec,
            mount,
            clm,
            gains,
            limit,
            s_ref: None,
            prev_e: None,
        }
    }

    pub fn s_ref(&self) -> Option<f64> {
        self.s_ref
    }
}

impl CommandSource for PdController<'_> {
    fn name(&self) -> &str {
        "pd"
    }

    fn tick(&mut self, obs: &Observation) -> Result<TickOutput> {
        let reference = reference_at(&self.spec, obs, &self.mount);
        let s = measure(self.clm, obs.frame)?;
        let comp_ms = cost_ms(self.clm.macs());
        let command = match (s, self.s_ref) {
            _ if reference.finished => reference,
            (Some(s_t), s_ref) => {
                let s_ref = *self.s_ref.get_or_insert(s_ref.unwrap_or(s_t));
                let (raw, e) = pd_tick(s_t, s_ref, self.prev_e, &self.gains, obs.clock.frame_period());
                self.prev_e = Some(e);
                compose(&reference, raw, self.limit)
            }
            (None, Some(_)) => {
                self.prev_e = None;
                ControlCommand {
                    degraded: true,
                    ..reference
                }
            }
            (None, None) => reference,
        };
        Ok(TickOutput {
            command,
            measured_u: s,
            comp_ms,
        })
    }
}

/// Frames, poses and CLM readings of the most recent control ticks.
#[derive(Clone, Debug, Default)]
pub struct ContextBuffer {
    pub frames: VecDeque<TactileFrame>,
    pub actions: VecDeque<Action>,
    pub measured: VecDeque<Option<f64>>,
    capacity: usize,
}

impl ContextBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            ..Default::default()
        }
    }

    pub fn push(&mut self, frame: TactileFrame, action: Action, measured: Option<f64>) {
        if self.frames.len() == self.capacity {
            self.frames.pop_front();
            self.actions.pop_front();
            self.measured.pop_front();
        }
        self.frames.push_back(frame);
        self.actions.push_back(action);
        self.measured.push_back(measured);
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// The reference trajectory sampled ahead from `pose` at frame `frame_index`:
/// one held twist per horizon frame and the pose reached at each frame.
pub fn plan_horizon(
    spec: &TrajectorySpec,
    pose: &Pose,
    frame_index: usize,
    clock: &FrameClock,
    horizon: usize,
) -> (Vec<Action>, Vec<Twist>) {
    let mut actions = Vec::with_capacity(horizon);
    let mut twists = Vec::with_capacity(horizon);
    let mut p = *pose;
    for j in 1..=horizon {
        let start = clock.frame_tick(frame_index + j - 1);
        let end = clock.frame_tick(frame_index + j);
        let twist = spec.reference_twist(start as f64 * clock.physics_dt).twist;
        for _ in start..end {
            p = p.integrate(&twist, clock.physics_dt);
        }
        twists.push(twist);
        actions.push(Action {
            pose: p,
            timestamp: end as f64 * clock.physics_dt,
        });
    }
    (actions, twists)
}

/// Everything one d-FPC evaluation reads.
pub struct DfpcInputs<'a> {
    pub buffer: &'a ContextBuffer,
    pub predictor: &'a Predictor,
    pub clm: &'a ClmModel,
    pub gains: &'a GainSchedule,
    pub spec: &'a TrajectorySpec,
    pub obs: &'a Observation<'a>,
    pub mount: &'a Pose,
    pub prev: Option<&'a ErrorHorizon>,
    pub limit: f64,
}

#[derive(Clone, Debug)]
pub struct DfpcOutput {
    pub command: ControlCommand,
    pub error: ErrorHorizon,
    pub forecast: ForecastResult,
}

/// One d-FPC evaluation: plan the reference ahead, forecast the stem
/// location, and add the residual of the horizon errors about the contact
/// line.
pub fn dfpc_tick(inp: &DfpcInputs) -> Result<DfpcOutput> {
    let cfg = inp.predictor.config();
    let buffer = inp.buffer;
    if buffer.len() < cfg.context {
        return Err(Error::InsufficientContext {
            have: buffer.len(),
            need: cfg.context,
        });
    }
    if !inp.predictor.is_ready() {
        return Err(Error::ModelNotReady(format!("{} forecaster is untrained", inp.predictor.kind().name())));
    }
    let reference = reference_at(inp.spec, inp.obs, inp.mount);
    let (planned, twists) = plan_horizon(inp.spec, &inp.obs.world.ee_pose, inp.obs.tick, &inp.obs.clock, cfg.horizon);
    let frames: Vec<TactileFrame> = buffer.frames.iter().cloned().collect();
    let actions: Vec<Action> = buffer.actions.iter().copied().collect();
    let measured: Vec<Option<f64>> = buffer.measured.iter().copied().collect();
    let input = ForecastInput {
        context_frames: &frames,
        context_actions: &actions,
        planned_actions: &planned,
        context_s: Some(&measured),
        oracle: Some(OracleView {
            state: inp.obs.world,
            models: inp.obs.models,
            clock: inp.obs.clock,
            frame_index: inp.obs.tick,
            planned_twists: &twists,
        }),
    };
    let forecast = predict(inp.predictor, &input, inp.clm)?;
    let error = error_horizon(&forecast.s_hat, forecast.s_t, inp.prev, inp.obs.clock.frame_period())?;
    let raw = residual_action(&error, inp.gains)?;
    Ok(DfpcOutput {
        command: compose(&reference, raw, inp.limit),
        error,
        forecast,
    })
}

pub struct DfpcController<'a> {
    spec: TrajectorySpec,
    mount: Pose,
    clm: &'a ClmModel,
    predictor: &'a Predictor,
    gains: GainSchedule,
    limit: f64,
    buffer: ContextBuffer,
    prev: Option<ErrorHorizon>,
    s_ref: Option<f64>,
}

impl<'a> DfpcController<'a> {
    pub fn new(
        spec: TrajectorySpec,
        mount: Pose,
        clm: &'a ClmModel,
        predictor: &'a Predictor,
        gains: GainSchedule,
        limit: f64,
    ) -> Result<Self> {
        gains.validate(predictor.config().horizon)?;
        Ok(Self {
            buffer: ContextBuffer::new(predictor.config().context),
            spec,
            mount,
            clm,
            predictor,
            gains,
            limit,
            prev: None,
            s_ref: None,
        })
    }

    pub fn s_ref(&self) -> Option<f64> {
        self.s_ref
    }
}

impl CommandSource for DfpcController<'_> {
    fn name(&self) -> &str {
        "dfpc"
    }

    fn tick(&mut self, obs: &Observation) -> Result<TickOutput> {
        let s = measure(self.clm, obs.frame)?;
        self.buffer.push(obs.frame.clone(), obs.action, s);
        let reference = reference_at(&self.spec, obs, &self.mount);
        let mut comp_ms = cost_ms(self.clm.macs());
        if s.is_some() && self.s_ref.is_none() {
            self.s_ref = s;
        }
        let command = if reference.finished {
            reference
        } else if s.is_none() {
            self.prev = None;
            ControlCommand {
                degraded: self.s_ref.is_some(),
                ..reference
            }
        } else {
            let inputs = DfpcInputs {
                buffer: &self.buffer,
                predictor: self.predictor,
                clm: self.clm,
                gains: &self.gains,
                spec: &self.spec,
                obs,
                mount: &self.mount,
                prev: self.prev.as_ref(),
                limit: self.limit,
            };
            match dfpc_tick(&inputs) {
                Ok(out) => {
                    comp_ms += cost_ms(self.predictor.macs());
                    if out.forecast.frames_hat.is_some() {
                        comp_ms += cost_ms(self.clm.macs() * self.gains.len());
                    }
                    self.prev = Some(out.error);
                    out.command
                }
                Err(e @ (Error::ModelNotReady(_) | Error::InsufficientContext { .. })) => {
                    log::debug!("d-FPC running on the reference only at tick {}: {e}", obs.tick);
                    self.prev = None;
                    ControlCommand {
                        degraded: true,
                        ..reference
                    }
                }
                Err(e) => return Err(e),
            }
        };
        Ok(TickOutput {
            command,
            measured_u: s,
            comp_ms,
        })
    }
}
