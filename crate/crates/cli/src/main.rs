//! `stempush`: dataset generation, training, single rollouts, benchmarks and
//! plots, all driven by one configuration tree.
//!
//! Settings resolve as flags > `STEMPUSH_*` environment variables > the
//! `--config` file > built-in defaults. Exit status is 0 on success, 1 on
//! invalid input and 2 when a computation fails.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stempush::bench::{ReportFormat, Zone};
use stempush::control::{ControllerKind, TrajectoryKind};
use stempush::forecast::BackendKind;
use stempush::{Config, Error};

#[derive(Parser, Debug)]
#[command(name = "stempush", version, about = "Tactile predictive control of stem pushing")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML configuration file; omitted keys take their defaults.
    #[arg(long, global = true, env = "STEMPUSH_CONFIG")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, env = "STEMPUSH_OUT")]
    out: Option<String>,
    #[arg(long, global = true, env = "STEMPUSH_SEED")]
    seed: Option<u64>,
    /// Worker threads, 0 for one per core.
    #[arg(long, global = true, env = "STEMPUSH_WORKERS")]
    workers: Option<usize>,
    /// Named experiment matrix.
    #[arg(long, global = true, env = "STEMPUSH_MATRIX")]
    matrix: Option<String>,
    /// Repetitions per benchmark cell.
    #[arg(long, global = true, env = "STEMPUSH_SEEDS")]
    seeds: Option<usize>,
    /// Forecaster: image, state or oracle.
    #[arg(long, global = true, env = "STEMPUSH_BACKEND")]
    backend: Option<BackendKind>,
    /// Controller for `rollout`: openloop, pd or dfpc.
    #[arg(long, global = true, env = "STEMPUSH_CONTROLLER")]
    controller: Option<ControllerKind>,
    /// Tactile image side in pixels, 32 or 64.
    #[arg(long, global = true, env = "STEMPUSH_RESOLUTION")]
    resolution: Option<usize>,
    /// Report formats, comma separated: csv, json, svg.
    #[arg(long, global = true, env = "STEMPUSH_FORMATS", value_delimiter = ',')]
    formats: Option<Vec<ReportFormat>>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render the labelled contact-localisation dataset.
    GenClmData,
    /// Train the contact-localisation model on a rendered dataset.
    TrainClm {
        /// Directory written by `gen-clm-data`.
        #[arg(long, env = "STEMPUSH_CLM_DATA")]
        data: Option<String>,
    },
    /// Simulate open-loop push rollouts for forecaster training.
    GenPushData,
    /// Train and evaluate the forecaster selected by --backend.
    TrainTfm {
        /// Directory written by `gen-push-data`.
        #[arg(long, env = "STEMPUSH_PUSH_DATA")]
        data: Option<String>,
        /// Contact-localisation checkpoint; trained on the fly if omitted.
        #[arg(long, env = "STEMPUSH_CLM_MODEL")]
        clm: Option<String>,
    },
    /// Run one trial and write its logs.
    Rollout {
        #[arg(long, env = "STEMPUSH_ZONE")]
        zone: Option<Zone>,
        /// linear or arc.
        #[arg(long, env = "STEMPUSH_TRAJECTORY", value_parser = parse_trajectory)]
        trajectory: Option<TrajectoryKind>,
        #[arg(long, env = "STEMPUSH_CLUSTER")]
        cluster: Option<bool>,
        #[arg(long, env = "STEMPUSH_REPETITION")]
        repetition: Option<usize>,
        #[arg(long, env = "STEMPUSH_CLM_MODEL")]
        clm: Option<String>,
        #[arg(long, env = "STEMPUSH_TFM_MODEL")]
        tfm: Option<String>,
    },
    /// Run an experiment matrix and write the report.
    Bench {
        #[arg(long, env = "STEMPUSH_CLM_MODEL")]
        clm: Option<String>,
        #[arg(long, env = "STEMPUSH_TFM_MODEL")]
        tfm: Option<String>,
    },
    /// Redraw the plots of a saved report.
    Plot {
        /// `report.json` written by `bench`.
        #[arg(long, env = "STEMPUSH_REPORT")]
        report: Option<String>,
    },
    /// Check the configuration and print its hash.
    ValidateConfig,
}

fn parse_trajectory(s: &str) -> Result<TrajectoryKind, String> {
    match s {
        "linear" | "linear_bang_bang" => Ok(TrajectoryKind::LinearBangBang),
        "arc" => Ok(TrajectoryKind::Arc),
        other => Err(format!("unknown trajectory `{other}`, expected linear or arc")),
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_path(slot: &mut Option<String>, value: Option<String>) {
    if value.is_some() {
        *slot = value;
    }
}

fn effective_config(cli: Cli) -> Result<(Config, Command), Error> {
    let c = cli.common;
    let mut cfg = match &c.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    set(&mut cfg.out, c.out);
    set(&mut cfg.seed, c.seed);
    set(&mut cfg.workers, c.workers);
    set(&mut cfg.bench.matrix, c.matrix);
    set(&mut cfg.bench.n_seeds, c.seeds);
    set(&mut cfg.forecast.backend, c.backend);
    set(&mut cfg.control.controller, c.controller);
    set(&mut cfg.tactile.resolution, c.resolution);
    set(&mut cfg.bench.formats, c.formats);
    match &cli.command {
        Command::TrainClm { data } => set_path(&mut cfg.paths.clm_data, data.clone()),
        Command::TrainTfm { data, clm } => {
            set_path(&mut cfg.paths.push_data, data.clone());
            set_path(&mut cfg.paths.clm_model, clm.clone());
        }
        Command::Rollout {
            zone,
            trajectory,
            cluster,
            repetition,
            clm,
            tfm,
        } => {
            set(&mut cfg.trial.zone, *zone);
            set(&mut cfg.trial.trajectory, *trajectory);
            set(&mut cfg.trial.cluster, *cluster);
            set(&mut cfg.trial.repetition, *repetition);
            set_path(&mut cfg.paths.clm_model, clm.clone());
            set_path(&mut cfg.paths.tfm_model, tfm.clone());
        }
        Command::Bench { clm, tfm } => {
            set_path(&mut cfg.paths.clm_model, clm.clone());
            set_path(&mut cfg.paths.tfm_model, tfm.clone());
        }
        Command::Plot { report } => set_path(&mut cfg.paths.report, report.clone()),
        Command::GenClmData | Command::GenPushData | Command::ValidateConfig => {}
    }
    cfg.validate()?;
    Ok((cfg, cli.command))
}

fn exit_code(e: &Error) -> u8 {
    if e.is_validation() {
        1
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("STEMPUSH_LOG", "warn")).init();

    let (cfg, command) = match effective_config(cli) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    println!("config hash {}", cfg.hash());
    if cfg.workers > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build_global() {
            eprintln!("error: worker pool: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(&cfg, &command) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
