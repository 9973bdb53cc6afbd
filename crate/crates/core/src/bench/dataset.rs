//! Open-loop push datasets for training the forecasters.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{contact_axis, ControlCommand, TrajectoryKind, TrajectorySpec};
use crate::error::{ensure, Error, Result};
use crate::forecast::{PushRollout, RolloutMeta};
use crate::rng::{derive_seed, SimRng};
use crate::simworld::{rollout, CommandSource, Observation, RolloutConfig, TickOutput, WorldModels};
use crate::tactile::Renderer;
use crate::types::{byte_to_pixel, pixel_to_byte, Action, Pose, TactileFrame};

use super::metrics::Zone;
use super::scenario::{build_scenario, ScenarioConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PushDatasetConfig {
    pub n_tasks: usize,
    /// Share of linear pushes; the rest are arcs.
    pub linear_fraction: f64,
    /// Initial locations are drawn from this interval.
    pub initial_u: [f64; 2],
    /// Amplitude of the random rotation about the contact line, rad/s.
    pub dither: f64,
    /// Frames each dither value is held.
    pub dither_hold: usize,
    /// Share of pushes into stem clusters.
    #[serde(default)]
    pub cluster_fraction: f64,
}

impl Default for PushDatasetConfig {
    fn default() -> Self {
        Self {
            n_tasks: 200,
            linear_fraction: 0.5,
            initial_u: [0.12, 0.88],
            dither: 0.25,
            dither_hold: 6,
            cluster_fraction: 0.0,
        }
    }
}

impl PushDatasetConfig {
    pub fn validate(&self) -> Result<()> {
        ensure(self.n_tasks >= 1, "push_data.n_tasks", || "must be at least 1".into())?;
        ensure((0.0..=1.0).contains(&self.linear_fraction), "push_data.linear_fraction", || {
            "must lie in [0, 1]".into()
        })?;
        let [lo, hi] = self.initial_u;
        ensure(0.0 <= lo && lo <= hi && hi <= 1.0, "push_data.initial_u", || "must be an interval in [0, 1]".into())?;
        ensure(self.dither >= 0.0 && self.dither.is_finite(), "push_data.dither", || "must be non-negative".into())?;
        ensure(self.dither_hold >= 1, "push_data.dither_hold", || "must be at least 1".into())?;
        ensure((0.0..=1.0).contains(&self.cluster_fraction), "push_data.cluster_fraction", || {
            "must lie in [0, 1]".into()
        })
    }

    /// Trajectory kind of task `i`: linear for the first share of every
    /// block of ten tasks, so any prefix keeps roughly the requested mix.
    pub fn kind_of(&self, i: usize) -> TrajectoryKind {
        let linear = (self.linear_fraction * 10.0).round() as usize;
        if i % 10 < linear {
            TrajectoryKind::LinearBangBang
        } else {
            TrajectoryKind::Arc
        }
    }

    /// Whether task `i` pushes into a cluster; spread independently of the
    /// trajectory kind.
    pub fn cluster_of(&self, i: usize) -> bool {
        let n = (self.cluster_fraction * 10.0).round() as usize;
        (3 * i) % 10 < n
    }
}

/// Open loop with a piecewise-constant random rotation about the contact
/// line, so recorded actions show how rotation moves the contact.
pub struct Explorer {
    spec: TrajectorySpec,
    mount: Pose,
    amplitude: f64,
    hold: usize,
    value: f64,
    rng: SimRng,
}

impl Explorer {
    pub fn new(spec: TrajectorySpec, mount: Pose, amplitude: f64, hold: usize, rng: SimRng) -> Self {
        Self {
            spec,
            mount,
            amplitude,
            hold: hold.max(1),
            value: 0.0,
            rng,
        }
    }
}

impl CommandSource for Explorer {
    fn name(&self) -> &str {
        "explore"
    }

    fn tick(&mut self, obs: &Observation) -> Result<TickOutput> {
        let r = self.spec.reference_twist(obs.time);
        if obs.tick % self.hold == 0 {
            self.value = if self.amplitude > 0.0 {
                self.rng.gen_range(-self.amplitude..=self.amplitude)
            } else {
                0.0
            };
        }
        let axis = contact_axis(&obs.action.pose, &self.mount);
        let mut command = if r.finished {
            ControlCommand::reference(r.twist, axis)
        } else {
            ControlCommand::new(r.twist, self.value, axis)
        };
        command.finished = r.finished;
        Ok(TickOutput {
            command,
            measured_u: None,
            comp_ms: 0.0,
        })
    }
}

/// Record `cfg.n_tasks` exploratory pushes. Task `i` depends only on
/// `(seed, i)`.
pub fn generate_push_dataset(
    cfg: &PushDatasetConfig,
    scenario: &ScenarioConfig,
    world: &WorldModels,
    rollout_cfg: &RolloutConfig,
    renderer: &Renderer,
    seed: u64,
) -> Result<Vec<PushRollout>> {
    cfg.validate()?;
    (0..cfg.n_tasks)
        .into_par_iter()
        .map(|i| {
            let task_seed = derive_seed(seed, &format!("push-task/{i}"));
            let kind = cfg.kind_of(i);
            let sc = build_scenario(world, scenario, kind, cfg.initial_u, cfg.cluster_of(i), rollout_cfg, task_seed)?;
            let rng = SimRng::new(task_seed);
            let mut explorer = Explorer::new(
                sc.spec.clone(),
                sc.models.finger.mount,
                cfg.dither,
                cfg.dither_hold,
                rng.split("dither"),
            );
            let run_cfg = RolloutConfig {
                keep_frames: true,
                ..sc.rollout.clone()
            };
            let log = rollout(&sc.initial, &mut explorer, &run_cfg, &sc.models, renderer, &rng)?;
            let zone = Zone::of(sc.initial_u).map_or("none", Zone::name).to_string();
            Ok(PushRollout {
                spec: sc.spec,
                meta: RolloutMeta {
                    index: i,
                    zone,
                    seed: task_seed,
                    initial_u: sc.initial_u,
                },
                poses: log.ticks.iter().map(|t| t.ee_pose).collect(),
                u_true: log.ticks.iter().map(|t| t.u_true).collect(),
                frames: log.frames,
                actions: log.actions,
            })
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct StoredMeta {
    meta: RolloutMeta,
    spec: TrajectorySpec,
}

const FRAMES_MAGIC: &[u8; 4] = b"SPF1";

fn write_frames(frames: &[TactileFrame], path: &Path) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    let size = frames.first().map_or(0, |f| f.size) as u32;
    let mut put = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
    put(FRAMES_MAGIC)?;
    put(&(frames.len() as u32).to_le_bytes())?;
    put(&size.to_le_bytes())?;
    for fr in frames {
        put(&fr.timestamp.to_le_bytes())?;
        let bytes: Vec<u8> = fr.pixels.iter().map(|&p| pixel_to_byte(p)).collect();
        put(&bytes)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_frames(path: &Path) -> Result<Vec<TactileFrame>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(f);
    let mut buf = Vec::new();
    r.read_to_end(&mut buf).map_err(|e| Error::io(path, e))?;
    let bad = || Error::Config(format!("{} is not a frame file", path.display()));
    if buf.len() < 12 || &buf[..4] != FRAMES_MAGIC {
        return Err(bad());
    }
    let word = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().expect("4 bytes")) as usize;
    let (n, size) = (word(4), word(8));
    let px = size * size * crate::types::CHANNELS;
    let stride = 8 + px;
    if buf.len() != 12 + n * stride {
        return Err(bad());
    }
    (0..n)
        .map(|k| {
            let o = 12 + k * stride;
            let ts = f64::from_le_bytes(buf[o..o + 8].try_into().expect("8 bytes"));
            let pixels = buf[o + 8..o + stride].iter().map(|&b| byte_to_pixel(b)).collect();
            TactileFrame::new(size, pixels, ts)
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One directory per rollout: `meta.json`, `frames.bin`, `samples.csv`
/// (pose and true location per frame) and `actions.csv` (physics-rate poses).
pub fn save_push_dataset(rollouts: &[PushRollout], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for r in rollouts {
        let d = dir.join(format!("{:05}", r.meta.index));
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        let meta = serde_json::to_string_pretty(&StoredMeta {
            meta: r.meta.clone(),
            spec: r.spec.clone(),
        })
        .map_err(|e| Error::Config(e.to_string()))?;
        let p = d.join("meta.json");
        fs::write(&p, meta + "\n").map_err(|e| Error::io(&p, e))?;
        write_frames(&r.frames, &d.join("frames.bin"))?;

        let p = d.join("samples.csv");
        let mut w = csv::Writer::from_path(&p).map_err(|e| Error::io(&p, e.into()))?;
        let csv_err = |e: csv::Error| Error::io(&p, e.into());
        w.write_record(["t", "u_true", "x", "y", "z", "rx", "ry", "rz"]).map_err(csv_err)?;
        for (k, pose) in r.poses.iter().enumerate() {
            let mut row = vec![r.frames[k].timestamp.to_string(), opt(r.u_true[k])];
            row.extend(pose.to_array().iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(&p, e))?;

        let p = d.join("actions.csv");
        let mut w = csv::Writer::from_path(&p).map_err(|e| Error::io(&p, e.into()))?;
        let csv_err = |e: csv::Error| Error::io(&p, e.into());
        w.write_record(["t", "x", "y", "z", "rx", "ry", "rz"]).map_err(csv_err)?;
        for a in &r.actions {
            let mut row = vec![a.timestamp.to_string()];
            row.extend(a.pose.to_array().iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}

fn parse(path: &Path, s: &str) -> Result<f64> {
    s.parse().map_err(|_| Error::Config(format!("{}: bad number `{s}`", path.display())))
}

fn read_rows(path: &Path) -> Result<Vec<Vec<String>>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    r.records()
        .map(|rec| {
            rec.map(|rec| rec.iter().map(str::to_string).collect())
                .map_err(|e| Error::io(path, e.into()))
        })
        .collect()
}

fn pose_from(path: &Path, cols: &[String]) -> Result<Pose> {
    let v: Vec<f64> = cols.iter().map(|c| parse(path, c)).collect::<Result<_>>()?;
    Ok(Pose::new([v[0], v[1], v[2]], [v[3], v[4], v[5]]))
}

pub fn load_push_dataset(dir: &Path) -> Result<Vec<PushRollout>> {
    let mut dirs: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("meta.json").is_file())
        .collect();
    dirs.sort();
    ensure(!dirs.is_empty(), "push_data", || format!("no rollouts under {}", dir.display()))?;
    dirs.iter()
        .map(|d| {
            let p = d.join("meta.json");
            let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            let stored: StoredMeta =
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            let frames = read_frames(&d.join("frames.bin"))?;
            let p = d.join("samples.csv");
            let rows = read_rows(&p)?;
            ensure(rows.len() == frames.len(), "push_data", || format!("{}: row count differs from frames", p.display()))?;
            let mut poses = Vec::with_capacity(rows.len());
            let mut u_true = Vec::with_capacity(rows.len());
            for row in &rows {
                ensure(row.len() == 8, "push_data", || format!("{}: expected 8 columns", p.display()))?;
                u_true.push(if row[1].is_empty() { None } else { Some(parse(&p, &row[1])?) });
                poses.push(pose_from(&p, &row[2..8])?);
            }
            let p = d.join("actions.csv");
            let actions = read_rows(&p)?
                .iter()
                .map(|row| {
                    ensure(row.len() == 7, "push_data", || format!("{}: expected 7 columns", p.display()))?;
                    Ok(Action {
                        pose: pose_from(&p, &row[1..7])?,
                        timestamp: parse(&p, &row[0])?,
                    })
                })
                .collect::<Result<_>>()?;
            Ok(PushRollout {
                spec: stored.spec,
                meta: stored.meta,
                frames,
                poses,
                u_true,
                actions,
            })
        })
        .collect()
}
