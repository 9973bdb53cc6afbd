//! The configuration tree: every tunable of the pipeline in one TOML file.
//! Missing keys fall back to defaults, unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bench::{Matrix, MetricsConfig, PushDatasetConfig, ReportFormat, ScenarioConfig, Zone};
use crate::control::{ControllerKind, GainSchedule, PdGains, TrajectoryKind, DEFAULT_RESIDUAL_LIMIT};
use crate::error::{ensure, Error, Result};
use crate::forecast::{BackendKind, ImageTfmHyperparams, PredictorConfig, StateTfmHyperparams};
use crate::simworld::{RolloutConfig, WorldModels};
use crate::tactile::{ClmDatasetSpec, ClmHyperparams, RenderConfig};

/// The default configuration as shipped in `configs/default.toml`.
pub const DEFAULT_TOML: &str = include_str!("../../../configs/default.toml");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TactileConfig {
    /// Image side in pixels, 32 or 64.
    pub resolution: usize,
    pub marker_rows: usize,
    pub marker_cols: usize,
    pub render: RenderConfig,
}

impl Default for TactileConfig {
    fn default() -> Self {
        Self {
            resolution: 64,
            marker_rows: 8,
            marker_cols: 8,
            render: RenderConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastConfig {
    pub backend: BackendKind,
    pub predictor: PredictorConfig,
    /// Share of push rollouts held out for evaluation.
    pub holdout_fraction: f64,
    pub state: StateTfmHyperparams,
    pub image: ImageTfmHyperparams,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self {
            backend: BackendKind::State,
            predictor: PredictorConfig::default(),
            holdout_fraction: 0.2,
            state: StateTfmHyperparams::default(),
            image: ImageTfmHyperparams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlConfig {
    /// Controller used by `rollout`.
    pub controller: ControllerKind,
    pub pd: PdGains,
    pub dfpc: GainSchedule,
    /// rad/s
    pub residual_limit: f64,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            controller: ControllerKind::Dfpc,
            pd: PdGains::default(),
            dfpc: GainSchedule::uniform(
                PredictorConfig::default().horizon,
                GainSchedule::DEFAULT_KP,
                GainSchedule::DEFAULT_KD,
            ),
            residual_limit: DEFAULT_RESIDUAL_LIMIT,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub n_seeds: usize,
    /// Name of an entry of `matrices`.
    pub matrix: String,
    pub formats: Vec<ReportFormat>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            n_seeds: 5,
            matrix: "table1".into(),
            formats: vec![ReportFormat::Csv, ReportFormat::Json, ReportFormat::Svg],
        }
    }
}

/// Input artifacts. A missing model is trained on the fly where possible.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Directory written by `gen-clm-data`.
    pub clm_data: Option<String>,
    /// Checkpoint written by `train-clm`.
    pub clm_model: Option<String>,
    /// Directory written by `gen-push-data`.
    pub push_data: Option<String>,
    /// Checkpoint written by `train-tfm`.
    pub tfm_model: Option<String>,
    /// `report.json` written by `bench`.
    pub report: Option<String>,
}

/// The single trial run by `rollout`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialConfig {
    pub zone: Zone,
    pub trajectory: TrajectoryKind,
    pub cluster: bool,
    pub repetition: usize,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            zone: Zone::Zone3,
            trajectory: TrajectoryKind::LinearBangBang,
            cluster: false,
            repetition: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Master seed; every stage derives its own stream from it.
    pub seed: u64,
    /// Worker threads, 0 for one per core.
    pub workers: usize,
    /// Output directory.
    pub out: String,
    pub world: WorldModels,
    pub tactile: TactileConfig,
    pub clm_data: ClmDatasetSpec,
    pub clm: ClmHyperparams,
    pub push_data: PushDatasetConfig,
    pub scenario: ScenarioConfig,
    pub rollout: RolloutConfig,
    pub forecast: ForecastConfig,
    pub control: ControlConfig,
    pub metrics: MetricsConfig,
    pub bench: BenchConfig,
    pub matrices: BTreeMap<String, Matrix>,
    pub trial: TrialConfig,
    pub paths: PathsConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 7,
            workers: 0,
            out: "out".into(),
            world: WorldModels::default(),
            tactile: TactileConfig::default(),
            clm_data: ClmDatasetSpec::default(),
            clm: ClmHyperparams::default(),
            push_data: PushDatasetConfig::default(),
            scenario: ScenarioConfig::default(),
            rollout: RolloutConfig::default(),
            forecast: ForecastConfig::default(),
            control: ControlConfig::default(),
            metrics: MetricsConfig::default(),
            bench: BenchConfig::default(),
            matrices: default_matrices(),
            trial: TrialConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

pub fn default_matrices() -> BTreeMap<String, Matrix> {
    BTreeMap::from([
        ("table1".to_string(), Matrix::table1()),
        ("table2".to_string(), Matrix::table2()),
        ("table3".to_string(), Matrix::table3()),
    ])
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 of the canonical JSON form, hex encoded. The output directory
    /// and worker count do not change results and are left out.
    pub fn hash(&self) -> String {
        let canonical = Config {
            out: String::new(),
            workers: 0,
            ..self.clone()
        };
        let json = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn matrix(&self, name: &str) -> Result<&Matrix> {
        self.matrices.get(name).ok_or_else(|| {
            let known: Vec<&str> = self.matrices.keys().map(String::as_str).collect();
            Error::validation("bench.matrix", format!("no matrix `{name}`; known: {}", known.join(", ")))
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        let t = &self.tactile;
        ensure(t.resolution == 32 || t.resolution == 64, "tactile.resolution", || {
            format!("{} not in {{32, 64}}", t.resolution)
        })?;
        crate::tactile::MarkerLayout::grid(t.resolution, t.marker_rows, t.marker_cols)?;
        t.render.validate()?;
        self.clm_data.validate(self.world.finger.length)?;
        ensure(self.clm.epochs >= 1 && self.clm.batch_size >= 1, "clm", || {
            "epochs and batch_size must be positive".into()
        })?;
        ensure((0.0..1.0).contains(&self.clm.holdout_fraction), "clm.holdout_fraction", || {
            "must lie in [0, 1)".into()
        })?;
        self.push_data.validate()?;
        self.scenario.validate()?;
        self.rollout.validate()?;
        let f = &self.forecast;
        f.predictor.validate()?;
        ensure((0.0..1.0).contains(&f.holdout_fraction), "forecast.holdout_fraction", || {
            "must lie in [0, 1)".into()
        })?;
        ensure(f.state.hidden >= 1 && f.state.epochs >= 1 && f.state.batch_size >= 1, "forecast.state", || {
            "hidden, epochs and batch_size must be positive".into()
        })?;
        ensure(f.image.epochs >= 1 && f.image.batch_size >= 1 && f.image.max_windows >= 1, "forecast.image", || {
            "epochs, batch_size and max_windows must be positive".into()
        })?;
        ensure(f.predictor.frame_hz == self.rollout.frame_hz, "forecast.predictor.frame_hz", || {
            format!("{} differs from rollout.frame_hz = {}", f.predictor.frame_hz, self.rollout.frame_hz)
        })?;
        ensure(self.metrics.frame_hz == self.rollout.frame_hz, "metrics.frame_hz", || {
            format!("{} differs from rollout.frame_hz = {}", self.metrics.frame_hz, self.rollout.frame_hz)
        })?;
        self.control.pd.validate()?;
        self.control.dfpc.validate(f.predictor.horizon)?;
        ensure(self.control.residual_limit > 0.0, "control.residual_limit", || "must be positive".into())?;
        self.metrics.validate()?;
        ensure(self.bench.n_seeds >= 1, "bench.n_seeds", || "must be at least 1".into())?;
        ensure(!self.out.is_empty(), "out", || "must not be empty".into())?;
        for (name, m) in &self.matrices {
            m.validate().map_err(|e| Error::validation(format!("matrices.{name}"), e.to_string()))?;
        }
        self.matrix(&self.bench.matrix).map(|_| ())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_file_is_the_default() {
        let cfg = Config::from_toml(DEFAULT_TOML).unwrap();
        assert_eq!(cfg, Config::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn toml_round_trip() {
        let cfg = Config::default();
        let back = Config::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn partial_files_fill_in_defaults() {
        let cfg = Config::from_toml("seed = 11\n[metrics]\nslip_threshold = 0.01\n").unwrap();
        assert_eq!(cfg.seed, 11);
        assert_eq!(cfg.metrics.slip_threshold, 0.01);
        assert_eq!(cfg.metrics.frame_hz, MetricsConfig::default().frame_hz);
        assert_ne!(cfg.hash(), Config::default().hash());
    }

    #[test]
    fn hash_ignores_output_location_and_workers() {
        let a = Config::default();
        let b = Config {
            out: "elsewhere".into(),
            workers: 3,
            ..a.clone()
        };
        assert_eq!(a.hash(), b.hash());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = Config::from_toml("[metrics]\nslip_treshold = 0.01\n").unwrap_err();
        assert!(err.to_string().contains("slip_treshold"), "{err}");
    }

    #[test]
    fn gain_length_must_match_the_horizon() {
        let mut cfg = Config::default();
        cfg.control.dfpc = GainSchedule::uniform(3, 1.0, 0.0);
        assert!(cfg.validate().unwrap_err().is_validation());
    }
}
