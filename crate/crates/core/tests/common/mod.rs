#![allow(dead_code)]

use stempush::bench::{build_scenario, Scenario, ScenarioConfig};
use stempush::control::TrajectoryKind;
use stempush::simworld::{CommandSource, FingerModel, Observation, RolloutConfig, TickOutput, WorldModels};
use stempush::tactile::{MarkerLayout, RenderConfig, Renderer};
use stempush::control::ControlCommand;
use stempush::{Result, Twist};

pub fn renderer(size: usize, noise_std: f64) -> Renderer {
    let config = RenderConfig {
        noise_std,
        ..RenderConfig::default()
    };
    Renderer::new(MarkerLayout::grid(size, 8, 8).unwrap(), config, FingerModel::default()).unwrap()
}

pub fn push(kind: TrajectoryKind, u: f64, cluster: bool, seed: u64) -> Scenario {
    build_scenario(
        &WorldModels::default(),
        &ScenarioConfig::default(),
        kind,
        [u, u],
        cluster,
        &RolloutConfig::default(),
        seed,
    )
    .unwrap()
}

/// Sends one fixed twist forever.
pub struct Constant(pub Twist);

impl CommandSource for Constant {
    fn name(&self) -> &str {
        "constant"
    }

    fn tick(&mut self, _obs: &Observation) -> Result<TickOutput> {
        Ok(TickOutput {
            command: ControlCommand::reference(self.0, stempush::Vec3::z()),
            measured_u: None,
            comp_ms: 0.0,
        })
    }
}
