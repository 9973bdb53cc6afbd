//! Forecast by simulation: step a copy of the true world under the planned
//! twists and read the stem attachment at each future frame.

use crate::error::Result;
use crate::simworld::{step, FrameClock, WorldModels, WorldState};
use crate::types::Twist;

/// Privileged view of the simulation handed to the oracle.
#[derive(Clone, Copy)]
pub struct OracleView<'a> {
    pub state: &'a WorldState,
    pub models: &'a WorldModels,
    pub clock: FrameClock,
    /// Index of the frame the state belongs to.
    pub frame_index: usize,
    /// One twist per horizon step, held from frame to frame.
    pub planned_twists: &'a [Twist],
}

/// Locations at the next `planned_twists.len()` frames. Frames without a
/// contact repeat the previous location, starting from `s_t`.
pub fn oracle_forecast(view: &OracleView, s_t: f64) -> Result<Vec<f64>> {
    let clock = view.clock;
    let mut state = view.state.clone();
    let mut tick = clock.frame_tick(view.frame_index);
    let mut last = s_t;
    let mut out = Vec::with_capacity(view.planned_twists.len());
    for (j, twist) in view.planned_twists.iter().enumerate() {
        let target = clock.frame_tick(view.frame_index + j + 1);
        while tick < target {
            state = step(&state, twist, clock.physics_dt, view.models)?.next;
            tick += 1;
        }
        if let Some(u) = state.u_true() {
            last = u;
        }
        out.push(last.clamp(0.0, 1.0));
    }
    Ok(out)
}
