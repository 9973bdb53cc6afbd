//! The experiment matrix: matched-seed trials of every controller in every
//! scenario and zone, aggregated into mean and standard deviation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{
    ControllerKind, DfpcController, GainSchedule, OpenLoop, PdController, PdGains, TrajectoryKind,
};
use crate::error::{ensure, Result};
use crate::forecast::Predictor;
use crate::log::RolloutLog;
use crate::rng::{derive_seed, SimRng};
use crate::simworld::{rollout, CommandSource, RolloutConfig, WorldModels};
use crate::tactile::{ClmModel, Renderer};

use super::metrics::{compute_metrics, MetricsConfig, TrialMetrics, Zone};
use super::scenario::{build_scenario, Scenario, ScenarioConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Matrix {
    pub controllers: Vec<ControllerKind>,
    pub zones: Vec<Zone>,
    pub trajectories: Vec<TrajectoryKind>,
    pub cluster: bool,
}

impl Matrix {
    pub fn validate(&self) -> Result<()> {
        ensure(!self.controllers.is_empty(), "matrix.controllers", || "empty".into())?;
        ensure(!self.zones.is_empty(), "matrix.zones", || "empty".into())?;
        ensure(!self.trajectories.is_empty(), "matrix.trajectories", || "empty".into())
    }

    /// Single-stem linear pushes, every zone and controller.
    pub fn table1() -> Self {
        Self {
            controllers: ControllerKind::ALL.to_vec(),
            zones: Zone::ALL.to_vec(),
            trajectories: vec![TrajectoryKind::LinearBangBang],
            cluster: false,
        }
    }

    /// Linear and circular pushes.
    pub fn table2() -> Self {
        Self {
            trajectories: vec![TrajectoryKind::LinearBangBang, TrajectoryKind::Arc],
            ..Self::table1()
        }
    }

    /// Linear pushes into stem clusters.
    pub fn table3() -> Self {
        Self {
            cluster: true,
            ..Self::table1()
        }
    }

    pub fn scenario_name(&self, kind: TrajectoryKind) -> String {
        if self.cluster {
            format!("{}_cluster", kind.name())
        } else {
            kind.name().to_string()
        }
    }
}

/// Trained models and gains shared by every trial.
pub struct Toolkit<'a> {
    pub clm: &'a ClmModel,
    pub predictor: &'a Predictor,
    pub renderer: &'a Renderer,
    pub pd: PdGains,
    pub dfpc: GainSchedule,
    pub residual_limit: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSettings {
    pub n_seeds: usize,
    pub seed: u64,
    pub world: WorldModels,
    pub scenario: ScenarioConfig,
    pub rollout: RolloutConfig,
    pub metrics: MetricsConfig,
}

impl ExperimentSettings {
    pub fn validate(&self) -> Result<()> {
        ensure(self.n_seeds >= 1, "bench.n_seeds", || "must be at least 1".into())?;
        self.world.validate()?;
        self.scenario.validate()?;
        self.rollout.validate()?;
        self.metrics.validate()
    }

    /// World seed of the `i`-th repetition; shared by every controller and
    /// by the single and cluster variants of a scenario.
    pub fn trial_seed(&self, kind: TrajectoryKind, zone: Zone, i: usize) -> u64 {
        derive_seed(self.seed, &format!("trial/{}/{}/{i}", kind.name(), zone.name()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub controller: ControllerKind,
    pub scenario: String,
    pub zone: Zone,
    pub repetition: usize,
    pub seed: u64,
    pub initial_u: f64,
    pub first_contact_tick: Option<usize>,
    pub metrics: Option<TrialMetrics>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    /// Mean and sample standard deviation (zero for a single value).
    pub fn of(values: &[f64]) -> Stat {
        let n = values.len();
        if n == 0 {
            return Stat { mean: f64::NAN, std: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n >= 2 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Stat { mean, std }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub controller: ControllerKind,
    pub scenario: String,
    pub zone: Zone,
    pub n: usize,
    pub failures: usize,
    pub failed: bool,
    /// One entry per metric, in `TrialMetrics::NAMES` order.
    pub stats: Vec<(String, Stat)>,
}

impl CellSummary {
    pub fn stat(&self, metric: &str) -> Option<&Stat> {
        self.stats.iter().find(|(m, _)| m == metric).map(|(_, s)| s)
    }
}

/// Location and residual over time in one trial, for plotting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub controller: ControllerKind,
    pub scenario: String,
    pub zone: Zone,
    pub t: Vec<f64>,
    pub u_true: Vec<Option<f64>>,
    pub a_res: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub n_seeds: usize,
    pub seed: u64,
    pub cells: Vec<CellSummary>,
    pub trials: Vec<TrialRecord>,
    /// First repetition of every cell.
    pub traces: Vec<Trace>,
}

impl ExperimentReport {
    pub fn cell(&self, controller: ControllerKind, scenario: &str, zone: Zone) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.controller == controller && c.scenario == scenario && c.zone == zone)
    }
}

/// Run one controller through one scenario.
pub fn run_trial(sc: &Scenario, controller: ControllerKind, tk: &Toolkit) -> Result<RolloutLog> {
    let mount = sc.models.finger.mount;
    let mut source: Box<dyn CommandSource> = match controller {
        ControllerKind::OpenLoop => Box::new(OpenLoop::new(sc.spec.clone(), mount)),
        ControllerKind::Pd => Box::new(PdController::new(sc.spec.clone(), mount, tk.clm, tk.pd, tk.residual_limit)),
        ControllerKind::Dfpc => Box::new(DfpcController::new(
            sc.spec.clone(),
            mount,
            tk.clm,
            tk.predictor,
            tk.dfpc.clone(),
            tk.residual_limit,
        )?),
    };
    let rng = SimRng::new(sc.seed).split("rollout");
    rollout(&sc.initial, source.as_mut(), &sc.rollout, &sc.models, tk.renderer, &rng)
}

struct Job {
    controller: ControllerKind,
    kind: TrajectoryKind,
    zone: Zone,
    repetition: usize,
}

pub fn run_experiment(matrix: &Matrix, settings: &ExperimentSettings, tk: &Toolkit) -> Result<ExperimentReport> {
    matrix.validate()?;
    settings.validate()?;
    let mut jobs = Vec::new();
    for &kind in &matrix.trajectories {
        for &zone in &matrix.zones {
            for &controller in &matrix.controllers {
                for repetition in 0..settings.n_seeds {
                    jobs.push(Job {
                        controller,
                        kind,
                        zone,
                        repetition,
                    });
                }
            }
        }
    }
    let results: Vec<(TrialRecord, Option<Trace>)> = jobs
        .par_iter()
        .map(|job| {
            let seed = settings.trial_seed(job.kind, job.zone, job.repetition);
            let scenario = matrix.scenario_name(job.kind);
            let range = settings.scenario.zone_range(job.zone);
            let built = build_scenario(
                &settings.world,
                &settings.scenario,
                job.kind,
                range,
                matrix.cluster,
                &settings.rollout,
                seed,
            );
            let mut record = TrialRecord {
                controller: job.controller,
                scenario: scenario.clone(),
                zone: job.zone,
                repetition: job.repetition,
                seed,
                initial_u: built.as_ref().map_or(f64::NAN, |s| s.initial_u),
                first_contact_tick: None,
                metrics: None,
                error: None,
            };
            let log = built.and_then(|sc| run_trial(&sc, job.controller, tk));
            let mut trace = None;
            match log {
                Ok(log) => {
                    record.first_contact_tick = log.first_contact_tick();
                    match compute_metrics(&log, &settings.metrics) {
                        Ok(m) => record.metrics = Some(m),
                        Err(e) => record.error = Some(e.to_string()),
                    }
                    if job.repetition == 0 {
                        trace = Some(Trace {
                            controller: job.controller,
                            scenario,
                            zone: job.zone,
                            t: log.ticks.iter().map(|t| t.t).collect(),
                            u_true: log.ticks.iter().map(|t| t.u_true).collect(),
                            a_res: log.ticks.iter().map(|t| t.command.a_res).collect(),
                        });
                    }
                }
                Err(e) => record.error = Some(e.to_string()),
            }
            if let Some(err) = &record.error {
                log::warn!(
                    "{} / {} / {} repetition {} failed: {err}",
                    record.controller.name(),
                    record.scenario,
                    record.zone.name(),
                    record.repetition
                );
            }
            (record, trace)
        })
        .collect();

    let (trials, traces): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let traces: Vec<Trace> = traces.into_iter().flatten().collect();
    let mut cells = Vec::new();
    for chunk in trials.chunks(settings.n_seeds) {
        let first = &chunk[0];
        let ok: Vec<&TrialMetrics> = chunk.iter().filter_map(|t| t.metrics.as_ref()).collect();
        let stats = TrialMetrics::NAMES
            .iter()
            .enumerate()
            .map(|(k, name)| {
                let v: Vec<f64> = ok.iter().map(|m| m.values()[k]).collect();
                (name.to_string(), Stat::of(&v))
            })
            .collect();
        cells.push(CellSummary {
            controller: first.controller,
            scenario: first.scenario.clone(),
            zone: first.zone,
            n: ok.len(),
            failures: chunk.len() - ok.len(),
            failed: ok.is_empty(),
            stats,
        });
    }
    Ok(ExperimentReport {
        n_seeds: settings.n_seeds,
        seed: settings.seed,
        cells,
        trials,
        traces,
    })
}
