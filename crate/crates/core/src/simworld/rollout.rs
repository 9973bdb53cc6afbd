use serde::{Deserialize, Serialize};

use crate::control::ControlCommand;
use crate::error::{ensure, Error, Result};
use crate::log::{ControlTick, LoggedEvent, PhysicsRecord, RolloutLog};
use crate::rng::SimRng;
use crate::sync::{synchronize, DEFAULT_TOLERANCE};
use crate::tactile::Renderer;
use crate::types::{Action, ContactState, TactileFrame};

use super::model::WorldModels;
use super::state::WorldState;
use super::step::{step, MAX_DT};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RolloutConfig {
    /// s
    pub duration: f64,
    /// s
    pub physics_dt: f64,
    pub frame_hz: f64,
    /// Keep rendered frames in the log.
    #[serde(default)]
    pub keep_frames: bool,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            duration: 2.0,
            physics_dt: 0.001,
            frame_hz: 60.0,
            keep_frames: false,
        }
    }
}

/// Maps tactile frames onto physics ticks. Frame `k` is taken at the first
/// tick whose time is at or after `k / frame_hz`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameClock {
    pub physics_dt: f64,
    pub frame_hz: f64,
}

impl FrameClock {
    pub fn frame_tick(&self, k: usize) -> usize {
        // the 1e-6 tick slack absorbs rounding in k / (frame_hz * dt)
        let exact = k as f64 / (self.frame_hz * self.physics_dt);
        (exact - 1e-6).ceil().max(0.0) as usize
    }

    pub fn frame_period(&self) -> f64 {
        1.0 / self.frame_hz
    }
}

impl RolloutConfig {
    pub fn validate(&self) -> Result<()> {
        ensure(self.duration > 0.0, "rollout.duration", || "must be positive".into())?;
        ensure(self.physics_dt > 0.0 && self.physics_dt <= MAX_DT, "rollout.physics_dt", || {
            format!("{} outside (0, {MAX_DT}]", self.physics_dt)
        })?;
        ensure(self.frame_hz > 0.0 && 1.0 / self.frame_hz >= self.physics_dt, "rollout.frame_hz", || {
            "frame period must be at least one physics step".into()
        })
    }

    pub fn clock(&self) -> FrameClock {
        FrameClock {
            physics_dt: self.physics_dt,
            frame_hz: self.frame_hz,
        }
    }

    pub fn n_ticks(&self) -> usize {
        (self.duration / self.physics_dt).round() as usize
    }
}

/// What a controller sees at a control tick.
pub struct Observation<'a> {
    pub tick: usize,
    pub physics_tick: usize,
    pub time: f64,
    pub frame: &'a TactileFrame,
    /// End-effector pose paired with the frame.
    pub action: Action,
    /// Privileged ground truth; only the physics-oracle predictor reads it.
    pub world: &'a WorldState,
    pub models: &'a WorldModels,
    pub clock: FrameClock,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TickOutput {
    pub command: ControlCommand,
    pub measured_u: Option<f64>,
    /// Controller cost for this tick, ms.
    pub comp_ms: f64,
}

/// Anything that turns observations into commands.
pub trait CommandSource {
    fn name(&self) -> &str;
    fn tick(&mut self, obs: &Observation) -> Result<TickOutput>;
}

fn contacts(state: &WorldState) -> Vec<ContactState> {
    state.stems().map(|s| s.contact).collect()
}

/// Run a closed loop: physics every `physics_dt`, a rendered frame and a
/// controller consultation at `frame_hz`, command held between frames.
pub fn rollout(
    initial: &WorldState,
    controller: &mut dyn CommandSource,
    cfg: &RolloutConfig,
    world: &WorldModels,
    renderer: &Renderer,
    rng: &SimRng,
) -> Result<RolloutLog> {
    cfg.validate()?;
    world.validate()?;
    initial.check_invariants()?;
    let clock = cfg.clock();
    let n = cfg.n_ticks();
    let mut noise = rng.split("render-noise");
    let mut log = RolloutLog {
        controller: controller.name().to_string(),
        physics_dt: cfg.physics_dt,
        frame_hz: cfg.frame_hz,
        physics: Vec::with_capacity(n),
        ..Default::default()
    };
    let mut state = initial.clone();
    let mut command = ControlCommand::idle();
    let mut next_frame = 0usize;
    // recent pose samples for pairing with the next frame
    let window = (clock.frame_period() / cfg.physics_dt).ceil() as usize + 2;

    for k in 0..n {
        let t = k as f64 * cfg.physics_dt;
        let action = Action {
            pose: state.ee_pose,
            timestamp: t,
        };
        log.actions.push(action);
        if k == clock.frame_tick(next_frame) {
            let frame = renderer.render_all(&contacts(&state), Some(&mut noise), t);
            let recent = &log.actions[log.actions.len().saturating_sub(window)..];
            let synced = synchronize(std::slice::from_ref(&frame), recent, DEFAULT_TOLERANCE)?;
            let paired = synced
                .samples
                .first()
                .ok_or_else(|| Error::Unsynchronizable(format!("frame at t = {t} has no pose sample")))?;
            let obs = Observation {
                tick: next_frame,
                physics_tick: k,
                time: t,
                frame: &frame,
                action: paired.action,
                world: &state,
                models: world,
                clock,
            };
            let out = controller.tick(&obs)?;
            if !out.command.is_finite() {
                log::error!("controller {} returned a non-finite command at tick {next_frame}", controller.name());
                return Err(Error::NonFiniteCommand { tick: next_frame });
            }
            command = out.command;
            log.ticks.push(ControlTick {
                index: next_frame,
                physics_tick: k,
                t,
                u_true: state.u_true(),
                u_measured: out.measured_u,
                contact: state.stem.contact,
                ee_pose: state.ee_pose,
                command,
                comp_ms: out.comp_ms,
            });
            if cfg.keep_frames {
                log.frames.push(frame);
            }
            next_frame += 1;
        }
        let res = step(&state, &command.total, cfg.physics_dt, world)?;
        for e in res.events {
            log.events.push(LoggedEvent {
                physics_tick: k + 1,
                t: res.next.time,
                event: e,
            });
        }
        state = res.next;
        log.physics.push(PhysicsRecord {
            t: state.time,
            q: state.stem.q,
            contact: state.stem.contact,
            ee_pose: state.ee_pose,
        });
    }
    Ok(log)
}
