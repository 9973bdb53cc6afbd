use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use stempush::bench::{
    build_scenario, compute_metrics, emit_report, load_push_dataset, run_trial, save_push_dataset,
    ExperimentReport, Matrix, ReportFormat,
};
use stempush::control::ControllerKind;
use stempush::forecast::{BackendKind, ImageTfm, Predictor, StateTfm};
use stempush::pipeline::{self, Trained};
use stempush::tactile::{load_dataset, save_dataset, ClmModel};
use stempush::{Config, Error, Result};

use crate::Command;

pub fn run(cfg: &Config, command: &Command) -> Result<String> {
    let out = PathBuf::from(&cfg.out);
    if !matches!(command, Command::ValidateConfig) {
        fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        let text = cfg.to_toml()?;
        let p = out.join("config.toml");
        fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    }
    match command {
        Command::ValidateConfig => Ok("config is valid".into()),
        Command::GenClmData => gen_clm_data(cfg, &out),
        Command::TrainClm { .. } => train_clm(cfg, &out),
        Command::GenPushData => gen_push_data(cfg, &out),
        Command::TrainTfm { .. } => train_tfm(cfg, &out),
        Command::Rollout { .. } => rollout(cfg, &out),
        Command::Bench { .. } => bench(cfg, &out),
        Command::Plot { .. } => plot(cfg, &out),
    }
}

/// An input path from the config, which must exist.
fn input(field: &str, value: &Option<String>, hint: &str) -> Result<PathBuf> {
    let p = value
        .as_ref()
        .map(PathBuf::from)
        .ok_or_else(|| Error::validation(field, format!("not set; {hint}")))?;
    if !p.exists() {
        return Err(Error::validation(field, format!("{} does not exist", p.display())));
    }
    Ok(p)
}

fn optional_input(field: &str, value: &Option<String>) -> Result<Option<PathBuf>> {
    match value {
        Some(_) => input(field, value, "").map(Some),
        None => Ok(None),
    }
}

/// Model loading fails on bad files, which are input errors.
fn loaded<T>(field: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Io { .. } | Error::Nn(_) => Error::validation(field, e.to_string()),
        other => other,
    })
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(format!("json: {e}")))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn gen_clm_data(cfg: &Config, out: &Path) -> Result<String> {
    let renderer = pipeline::renderer(cfg)?;
    let samples = pipeline::clm_dataset(cfg, &renderer)?;
    let dir = out.join("clm_data");
    save_dataset(&samples, &dir)?;
    Ok(format!("wrote {} contact-localisation samples to {}", samples.len(), dir.display()))
}

fn train_clm(cfg: &Config, out: &Path) -> Result<String> {
    let dir = input("paths.clm_data", &cfg.paths.clm_data, "pass --data with a `gen-clm-data` directory")?;
    let samples = loaded("paths.clm_data", load_dataset(&dir))?;
    let model = pipeline::fit_clm(cfg, &samples)?;
    let path = out.join("clm.ckpt");
    model.save(&path)?;
    let mae = model.validation_mae.map_or("n/a".to_string(), |m| format!("{m:.4}"));
    Ok(format!("trained on {} samples, held-out MAE {mae}; wrote {}", samples.len(), path.display()))
}

fn gen_push_data(cfg: &Config, out: &Path) -> Result<String> {
    let renderer = pipeline::renderer(cfg)?;
    let data = pipeline::push_dataset(cfg, &renderer)?;
    let dir = out.join("push_data");
    save_push_dataset(&data, &dir)?;
    Ok(format!("wrote {} push rollouts to {}", data.len(), dir.display()))
}

fn clm_model(cfg: &Config) -> Result<ClmModel> {
    match optional_input("paths.clm_model", &cfg.paths.clm_model)? {
        Some(p) => loaded("paths.clm_model", ClmModel::load(&p, cfg.tactile.resolution)),
        None => {
            log::info!("no contact-localisation checkpoint given, training one");
            let renderer = pipeline::renderer(cfg)?;
            let samples = pipeline::clm_dataset(cfg, &renderer)?;
            pipeline::fit_clm(cfg, &samples)
        }
    }
}

fn train_tfm(cfg: &Config, out: &Path) -> Result<String> {
    let backend = cfg.forecast.backend;
    if backend == BackendKind::Oracle {
        return Err(Error::validation("forecast.backend", "the oracle backend has nothing to train"));
    }
    let dir = input("paths.push_data", &cfg.paths.push_data, "pass --data with a `gen-push-data` directory")?;
    let data = loaded("paths.push_data", load_push_dataset(&dir))?;
    let clm = clm_model(cfg)?;
    let (predictor, eval) = pipeline::fit_forecaster(cfg, backend, &data, &clm)?;
    let path = out.join(format!("tfm_{}.ckpt", backend.name()));
    match &predictor {
        Predictor::State(m) => m.save(&path)?,
        Predictor::Image(m) => m.save(&path)?,
        Predictor::Oracle(_) => unreachable!(),
    }
    let score = match &eval {
        Some(e) => {
            write_json(&out.join("tfm_eval.json"), e)?;
            format!(", held-out error {:.5} vs persistence {:.5}", e.error, e.persistence)
        }
        None => String::new(),
    };
    Ok(format!("trained the {} forecaster on {} rollouts{score}; wrote {}", backend.name(), data.len(), path.display()))
}

/// Models for rollouts and benchmarks: loaded when given, trained otherwise.
fn models(cfg: &Config, need_forecaster: bool) -> Result<Trained> {
    let renderer = pipeline::renderer(cfg)?;
    let clm = clm_model(cfg)?;
    let pcfg = cfg.forecast.predictor;
    let backend = cfg.forecast.backend;
    let tfm = optional_input("paths.tfm_model", &cfg.paths.tfm_model)?;
    let (predictor, forecast_eval, push_data) = match (backend, tfm) {
        _ if !need_forecaster => (Predictor::Oracle(pcfg), None, Vec::new()),
        (BackendKind::Oracle, _) => (Predictor::Oracle(pcfg), None, Vec::new()),
        (BackendKind::State, Some(p)) => {
            let m = loaded("paths.tfm_model", StateTfm::load(&p, pcfg, cfg.forecast.state.hidden))?;
            (Predictor::State(m), None, Vec::new())
        }
        (BackendKind::Image, Some(p)) => {
            let m = loaded("paths.tfm_model", ImageTfm::load(&p, pcfg, cfg.tactile.resolution))?;
            (Predictor::Image(m), None, Vec::new())
        }
        (kind, None) => {
            log::info!("no forecaster checkpoint given, training one");
            let data = pipeline::push_dataset(cfg, &renderer)?;
            let (p, e) = pipeline::fit_forecaster(cfg, kind, &data, &clm)?;
            (p, e, data)
        }
    };
    Ok(Trained {
        renderer,
        clm,
        predictor,
        forecast_eval,
        push_data,
    })
}

fn rollout(cfg: &Config, out: &Path) -> Result<String> {
    let controller = cfg.control.controller;
    let trained = models(cfg, controller == ControllerKind::Dfpc)?;
    let settings = pipeline::experiment_settings(cfg);
    let t = &cfg.trial;
    let seed = settings.trial_seed(t.trajectory, t.zone, t.repetition);
    let scenario = build_scenario(
        &cfg.world,
        &cfg.scenario,
        t.trajectory,
        cfg.scenario.zone_range(t.zone),
        t.cluster,
        &cfg.rollout,
        seed,
    )?;
    let log = run_trial(&scenario, controller, &trained.toolkit(cfg))?;
    let dir = out.join("rollout");
    log.save(&dir)?;
    let summary = match compute_metrics(&log, &cfg.metrics) {
        Ok(m) => {
            write_json(&dir.join("metrics.json"), &m)?;
            format!(
                "max displacement {:.4}, {} slips, {} control ticks",
                m.stem_max_disp,
                m.slip_instances,
                log.ticks.len()
            )
        }
        Err(e) => format!("{e}"),
    };
    Ok(format!("{} rollout, {}: {summary}; wrote {}", controller.name(), t.zone.name(), dir.display()))
}

fn formats(cfg: &Config) -> BTreeSet<ReportFormat> {
    cfg.bench.formats.iter().copied().collect()
}

fn bench(cfg: &Config, out: &Path) -> Result<String> {
    let matrix: &Matrix = cfg.matrix(&cfg.bench.matrix)?;
    let trained = models(cfg, matrix.controllers.contains(&ControllerKind::Dfpc))?;
    if let Some(e) = &trained.forecast_eval {
        write_json(&out.join("tfm_eval.json"), e)?;
    }
    let report = pipeline::bench(cfg, matrix, &trained)?;
    let written = emit_report(&report, &formats(cfg), out)?;
    let failed = report.trials.iter().filter(|t| t.metrics.is_none()).count();
    Ok(format!(
        "{}: {} cells, {} trials ({failed} failed); wrote {} files under {}",
        cfg.bench.matrix,
        report.cells.len(),
        report.trials.len(),
        written.len(),
        out.display()
    ))
}

fn plot(cfg: &Config, out: &Path) -> Result<String> {
    let path = input("paths.report", &cfg.paths.report, "pass --report with a `report.json` from `bench`")?;
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let report: ExperimentReport = serde_json::from_str(&text)
        .map_err(|e| Error::validation("paths.report", format!("{}: {e}", path.display())))?;
    let written = emit_report(&report, &BTreeSet::from([ReportFormat::Svg]), out)?;
    Ok(format!("wrote {} plots under {}", written.len(), out.join("plots").display()))
}
