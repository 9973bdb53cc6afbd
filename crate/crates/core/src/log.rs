//! In-memory record of a rollout and its line-oriented serialization.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::control::ControlCommand;
use crate::error::{Error, Result};
use crate::simworld::Event;
use crate::types::{Action, ContactState, Pose, TactileFrame};

/// Ground truth after one physics tick.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicsRecord {
    pub t: f64,
    pub q: [f64; 2],
    pub contact: ContactState,
    pub ee_pose: Pose,
}

/// One controller consultation, at a tactile frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlTick {
    pub index: usize,
    /// Physics tick at which the frame was taken.
    pub physics_tick: usize,
    pub t: f64,
    pub u_true: Option<f64>,
    pub u_measured: Option<f64>,
    pub contact: ContactState,
    pub ee_pose: Pose,
    pub command: ControlCommand,
    /// Controller cost for this tick, ms.
    pub comp_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoggedEvent {
    pub physics_tick: usize,
    pub t: f64,
    pub event: Event,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RolloutLog {
    pub controller: String,
    pub physics_dt: f64,
    pub frame_hz: f64,
    pub physics: Vec<PhysicsRecord>,
    pub ticks: Vec<ControlTick>,
    pub events: Vec<LoggedEvent>,
    /// End-effector pose stream at the physics rate.
    pub actions: Vec<Action>,
    /// Rendered frames, one per control tick, when kept.
    pub frames: Vec<TactileFrame>,
}

pub const CONTROL_COLUMNS: &[&str] = &[
    "index",
    "physics_tick",
    "t",
    "u_true",
    "u_measured",
    "in_contact",
    "sticking",
    "penetration",
    "normal_force",
    "tangential_force",
    "ee_x",
    "ee_y",
    "ee_z",
    "ee_roll",
    "ee_pitch",
    "ee_yaw",
    "ref_vx",
    "ref_vy",
    "ref_vz",
    "ref_wx",
    "ref_wy",
    "ref_wz",
    "a_res",
    "axis_x",
    "axis_y",
    "axis_z",
    "total_vx",
    "total_vy",
    "total_vz",
    "total_wx",
    "total_wy",
    "total_wz",
    "saturated",
    "degraded",
    "finished",
    "comp_ms",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

impl RolloutLog {
    /// First control tick at which the target stem was in contact.
    pub fn first_contact_tick(&self) -> Option<usize> {
        self.ticks.iter().position(|t| t.u_true.is_some())
    }

    pub fn contact_ticks(&self) -> impl Iterator<Item = &ControlTick> {
        self.ticks.iter().filter(|t| t.u_true.is_some())
    }

    /// One CSV row per control tick; values use the shortest round-trip
    /// float formatting so identical logs give identical bytes.
    pub fn write_control_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let csv_err = |e: csv::Error| Error::Config(format!("csv: {e}"));
        out.write_record(CONTROL_COLUMNS).map_err(csv_err)?;
        for k in &self.ticks {
            let c = &k.contact;
            let cmd = &k.command;
            let mut row: Vec<String> = vec![
                k.index.to_string(),
                k.physics_tick.to_string(),
                k.t.to_string(),
                opt(k.u_true),
                opt(k.u_measured),
                flag(c.in_contact).into(),
                flag(c.sticking).into(),
                c.penetration.to_string(),
                c.normal_force.to_string(),
                c.tangential_force.to_string(),
            ];
            row.extend(k.ee_pose.to_array().iter().map(f64::to_string));
            row.extend(cmd.a_ref.to_array().iter().map(f64::to_string));
            row.push(cmd.a_res.to_string());
            row.extend(cmd.contact_axis.iter().map(f64::to_string));
            row.extend(cmd.total.to_array().iter().map(f64::to_string));
            row.push(flag(cmd.saturated).into());
            row.push(flag(cmd.degraded).into());
            row.push(flag(cmd.finished).into());
            row.push(k.comp_ms.to_string());
            out.write_record(&row).map_err(csv_err)?;
        }
        out.flush().map_err(|e| Error::Config(format!("csv: {e}")))?;
        Ok(())
    }

    pub fn write_physics_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let csv_err = |e: csv::Error| Error::Config(format!("csv: {e}"));
        out.write_record([
            "t", "q1", "q2", "in_contact", "u", "sticking", "penetration", "normal_force", "tangential_force",
        ])
        .map_err(csv_err)?;
        for p in &self.physics {
            let c = &p.contact;
            out.write_record([
                p.t.to_string(),
                p.q[0].to_string(),
                p.q[1].to_string(),
                flag(c.in_contact).into(),
                if c.in_contact { c.u.to_string() } else { String::new() },
                flag(c.sticking).into(),
                c.penetration.to_string(),
                c.normal_force.to_string(),
                c.tangential_force.to_string(),
            ])
            .map_err(csv_err)?;
        }
        out.flush().map_err(|e| Error::Config(format!("csv: {e}")))?;
        Ok(())
    }

    pub fn control_csv_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_control_csv(&mut buf).expect("writing to memory");
        buf
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let control = dir.join("control.csv");
        let f = std::fs::File::create(&control).map_err(|e| Error::io(&control, e))?;
        self.write_control_csv(std::io::BufWriter::new(f))?;
        let physics = dir.join("physics.csv");
        let f = std::fs::File::create(&physics).map_err(|e| Error::io(&physics, e))?;
        self.write_physics_csv(std::io::BufWriter::new(f))?;
        let events = dir.join("events.csv");
        let mut text = String::from("physics_tick,t,event\n");
        for e in &self.events {
            text.push_str(&format!("{},{},{}\n", e.physics_tick, e.t, e.event.name()));
        }
        std::fs::write(&events, text).map_err(|e| Error::io(&events, e))
    }
}
