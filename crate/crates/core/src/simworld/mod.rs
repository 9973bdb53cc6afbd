//! Lumped-parameter physics of a flexible stem pushed by a tactile finger.

mod cluster;
mod contact;
mod model;
mod rollout;
mod state;
mod step;

pub use cluster::make_cluster;
pub use contact::{closest_approach, resolve, Closest, Resolved};
pub use model::{FingerModel, FrictionModel, LinearProfile, StemModel, WorldModels};
pub use rollout::{rollout, CommandSource, FrameClock, Observation, RolloutConfig, TickOutput};
pub use state::{transition_events, Event, StemState, StepResult, WorldState};
pub use step::{approach_pose, stem_energy, step, MAX_DT};
