//! Stem pushing with tactile prediction: a stem/finger simulator, synthetic
//! tactile images, contact localisation, action-conditioned forecasters, a
//! functional predictive controller and the benchmark harness around them.

pub mod bench;
pub mod config;
pub mod control;
mod error;
pub mod forecast;
pub mod log;
pub mod pipeline;
pub mod rng;
pub mod simworld;
pub mod sync;
pub mod tactile;
pub mod training;
pub mod types;

pub use config::Config;
pub use error::{Error, Result};
pub use rng::SimRng;
pub use types::{Action, ContactState, Pose, SyncedSample, TactileFrame, Twist, Vec3};
