//! The stages of the workflow, each driven by a [`Config`]: tactile data,
//! contact localisation, push data, forecaster training and the benchmark.
//! Every stage draws from its own stream derived from the master seed.

use serde::{Deserialize, Serialize};

use crate::bench::{
    generate_push_dataset, run_experiment, ExperimentReport, ExperimentSettings, Matrix, Toolkit,
};
use crate::config::Config;
use crate::error::{ensure, Result};
use crate::forecast::{
    image_horizon_mse, image_windows, measure_rollouts, split_rollouts, state_horizon_mae, state_windows,
    train_image_tfm, train_state_tfm, BackendKind, Predictor, PushRollout,
};
use crate::rng::{derive_seed, SimRng};
use crate::tactile::{generate_clm_dataset, train_clm, ClmModel, ClmSample, MarkerLayout, Renderer};

fn stream(cfg: &Config, stage: &str) -> SimRng {
    SimRng::new(derive_seed(cfg.seed, stage))
}

pub fn renderer(cfg: &Config) -> Result<Renderer> {
    let t = &cfg.tactile;
    let layout = MarkerLayout::grid(t.resolution, t.marker_rows, t.marker_cols)?;
    Renderer::new(layout, t.render.clone(), cfg.world.finger.clone())
}

pub fn clm_dataset(cfg: &Config, renderer: &Renderer) -> Result<Vec<ClmSample>> {
    generate_clm_dataset(&cfg.clm_data, renderer, &stream(cfg, "clm-data"))
}

pub fn fit_clm(cfg: &Config, samples: &[ClmSample]) -> Result<ClmModel> {
    train_clm(samples, &cfg.clm, &stream(cfg, "clm"))
}

pub fn push_dataset(cfg: &Config, renderer: &Renderer) -> Result<Vec<PushRollout>> {
    generate_push_dataset(
        &cfg.push_data,
        &cfg.scenario,
        &cfg.world,
        &cfg.rollout,
        renderer,
        derive_seed(cfg.seed, "push-data"),
    )
}

/// Held-out forecast error of a trained backend next to the persistence
/// baseline (last context value or frame repeated over the horizon).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastEval {
    pub backend: BackendKind,
    /// Horizon MAE of `u` for the state backend, pixel MSE for the image one.
    pub error: f64,
    pub persistence: f64,
    pub holdout_rollouts: usize,
    pub holdout_windows: usize,
}

/// Train the configured forecaster on the training share of `data` and
/// evaluate it on the rest. The oracle needs no training and gets no score.
pub fn fit_forecaster(
    cfg: &Config,
    backend: BackendKind,
    data: &[PushRollout],
    clm: &ClmModel,
) -> Result<(Predictor, Option<ForecastEval>)> {
    let f = &cfg.forecast;
    let pcfg = f.predictor;
    if backend == BackendKind::Oracle {
        return Ok((Predictor::Oracle(pcfg), None));
    }
    let (train_idx, held_idx) = split_rollouts(data.len(), f.holdout_fraction)?;
    let pick = |idx: &[usize]| -> Vec<PushRollout> { idx.iter().map(|&i| data[i].clone()).collect() };
    let (train, held) = (pick(&train_idx), pick(&held_idx));
    ensure(!train.is_empty(), "push_data.n_tasks", || "no rollouts left for training".into())?;
    let rng = stream(cfg, &format!("forecast/{}", backend.name()));
    match backend {
        BackendKind::State => {
            let train_s = measure_rollouts(&train, clm)?;
            let windows = state_windows(&train_s, &pcfg, f.state.window_stride);
            let model = train_state_tfm(&train, &windows, pcfg, &f.state, &rng)?;
            let eval = if held.is_empty() {
                None
            } else {
                let held_s = measure_rollouts(&held, clm)?;
                let hw = state_windows(&held_s, &pcfg, 1);
                let (error, persistence) = state_horizon_mae(&model, &held, &hw);
                Some(ForecastEval {
                    backend,
                    error,
                    persistence,
                    holdout_rollouts: held.len(),
                    holdout_windows: hw.len(),
                })
            };
            Ok((Predictor::State(model), eval))
        }
        BackendKind::Image => {
            let model = train_image_tfm(&train, pcfg, &f.image, &rng)?;
            let eval = if held.is_empty() {
                None
            } else {
                let hw = image_windows(&held, &pcfg, f.image.window_stride);
                let (error, persistence) = image_horizon_mse(&model, &held, &hw)?;
                Some(ForecastEval {
                    backend,
                    error,
                    persistence,
                    holdout_rollouts: held.len(),
                    holdout_windows: hw.len(),
                })
            };
            Ok((Predictor::Image(model), eval))
        }
        BackendKind::Oracle => unreachable!(),
    }
}

pub fn experiment_settings(cfg: &Config) -> ExperimentSettings {
    ExperimentSettings {
        n_seeds: cfg.bench.n_seeds,
        seed: cfg.seed,
        world: cfg.world.clone(),
        scenario: cfg.scenario.clone(),
        rollout: cfg.rollout.clone(),
        metrics: cfg.metrics.clone(),
    }
}

/// Everything the benchmark needs, trained from scratch.
pub struct Trained {
    pub renderer: Renderer,
    pub clm: ClmModel,
    pub predictor: Predictor,
    pub forecast_eval: Option<ForecastEval>,
    /// Push rollouts the forecaster was trained and evaluated on.
    pub push_data: Vec<PushRollout>,
}

impl Trained {
    pub fn toolkit<'a>(&'a self, cfg: &Config) -> Toolkit<'a> {
        Toolkit {
            clm: &self.clm,
            predictor: &self.predictor,
            renderer: &self.renderer,
            pd: cfg.control.pd,
            dfpc: cfg.control.dfpc.clone(),
            residual_limit: cfg.control.residual_limit,
        }
    }
}

pub fn train_all(cfg: &Config) -> Result<Trained> {
    cfg.validate()?;
    let renderer = renderer(cfg)?;
    let samples = clm_dataset(cfg, &renderer)?;
    let clm = fit_clm(cfg, &samples)?;
    log::info!("contact localisation trained, held-out MAE {:?}", clm.validation_mae);
    let push_data = push_dataset(cfg, &renderer)?;
    let (predictor, forecast_eval) = fit_forecaster(cfg, cfg.forecast.backend, &push_data, &clm)?;
    if let Some(e) = &forecast_eval {
        log::info!("{} forecaster held-out error {:.5}, persistence {:.5}", e.backend.name(), e.error, e.persistence);
    }
    Ok(Trained {
        renderer,
        clm,
        predictor,
        forecast_eval,
        push_data,
    })
}

pub fn bench(cfg: &Config, matrix: &Matrix, trained: &Trained) -> Result<ExperimentReport> {
    run_experiment(matrix, &experiment_settings(cfg), &trained.toolkit(cfg))
}
