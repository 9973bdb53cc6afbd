//! Reference trajectories and the three command sources: open loop, PD
//! tactile servoing and the functional predictive controller.

mod command;
mod fpc;
mod servo;
mod trajectory;

pub use command::{contact_axis, saturate, ControlCommand, DEFAULT_RESIDUAL_LIMIT};
pub use fpc::{error_horizon, residual_action, ErrorHorizon, GainSchedule};
pub use servo::{
    cost_ms, dfpc_tick, pd_tick, plan_horizon, ContextBuffer, ControllerKind, DfpcController, DfpcInputs, DfpcOutput,
    OpenLoop, PdController, PdGains, NS_PER_MAC,
};
pub use trajectory::{Reference, TrajectoryKind, TrajectorySpec};
