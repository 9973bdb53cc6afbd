//! Per-trial performance metrics computed from a rollout log.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::log::RolloutLog;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Zone {
    #[serde(rename = "zone1")]
    Zone1,
    #[serde(rename = "zone2")]
    Zone2,
    #[serde(rename = "zone3")]
    Zone3,
}

impl Zone {
    pub const ALL: [Zone; 3] = [Zone::Zone1, Zone::Zone2, Zone::Zone3];

    pub fn name(self) -> &'static str {
        match self {
            Zone::Zone1 => "zone1",
            Zone::Zone2 => "zone2",
            Zone::Zone3 => "zone3",
        }
    }

    /// Bounds of the zone and whether each bound is included.
    pub fn bounds(self) -> ((f64, bool), (f64, bool)) {
        match self {
            Zone::Zone1 => ((0.55, false), (0.90, true)),
            Zone::Zone2 => ((0.10, true), (0.45, false)),
            Zone::Zone3 => ((0.45, true), (0.55, true)),
        }
    }

    pub fn contains(self, u: f64) -> bool {
        let ((lo, lo_in), (hi, hi_in)) = self.bounds();
        (u > lo || (lo_in && u == lo)) && (u < hi || (hi_in && u == hi))
    }

    pub fn of(u: f64) -> Option<Zone> {
        Zone::ALL.into_iter().find(|z| z.contains(u))
    }
}

impl std::str::FromStr for Zone {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zone1" | "1" => Ok(Zone::Zone1),
            "zone2" | "2" => Ok(Zone::Zone2),
            "zone3" | "3" => Ok(Zone::Zone3),
            other => Err(Error::validation("zone", format!("unknown zone `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// Per-frame change of the stem location counted as a slip.
    pub slip_threshold: f64,
    pub frame_hz: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            slip_threshold: 0.0025,
            frame_hz: 60.0,
        }
    }
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<()> {
        ensure(self.slip_threshold > 0.0, "metrics.slip_threshold", || "must be positive".into())?;
        ensure(self.frame_hz > 0.0, "metrics.frame_hz", || "must be positive".into())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub stem_max_disp: f64,
    pub slip_instances: usize,
    /// Integral of |s - s_ref| over contact frames, s.
    pub disp_integral: f64,
    /// Integral of |a_res| over the trial, rad.
    pub action_integral: f64,
    pub comp_time_ms: f64,
}

impl TrialMetrics {
    pub const NAMES: [&'static str; 5] = [
        "stem_max_disp",
        "slip_instances",
        "disp_integral",
        "action_integral",
        "comp_time_ms",
    ];

    pub fn values(&self) -> [f64; 5] {
        [
            self.stem_max_disp,
            self.slip_instances as f64,
            self.disp_integral,
            self.action_integral,
            self.comp_time_ms,
        ]
    }
}

fn trapezoid(points: impl Iterator<Item = (f64, f64)>) -> f64 {
    let mut total = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for (t, y) in points {
        if let Some((t0, y0)) = prev {
            total += 0.5 * (y0 + y) * (t - t0);
        }
        prev = Some((t, y));
    }
    total
}

/// Metrics of one trial over the true stem location at the control frames.
/// The reference location is the first contact location.
pub fn compute_metrics(log: &RolloutLog, cfg: &MetricsConfig) -> Result<TrialMetrics> {
    cfg.validate()?;
    let s: Vec<(f64, f64)> = log.ticks.iter().filter_map(|t| t.u_true.map(|u| (t.t, u))).collect();
    if s.len() < 2 {
        return Err(Error::MetricsUndefined(format!(
            "{} contact frames in the `{}` trial, need 2",
            s.len(),
            log.controller
        )));
    }
    let s_ref = s[0].1;
    let max = s.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let min = s.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let slips = s.windows(2).filter(|w| (w[1].1 - w[0].1).abs() > cfg.slip_threshold).count();
    let disp_integral = trapezoid(s.iter().map(|&(t, u)| (t, (u - s_ref).abs())));
    let action_integral = trapezoid(log.ticks.iter().map(|t| (t.t, t.command.a_res.abs())));
    let comp = if log.ticks.is_empty() {
        0.0
    } else {
        log.ticks.iter().map(|t| t.comp_ms).sum::<f64>() / log.ticks.len() as f64
    };
    Ok(TrialMetrics {
        stem_max_disp: (max - min).abs(),
        slip_instances: slips,
        disp_integral,
        action_integral,
        comp_time_ms: comp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zones_are_disjoint_and_cover_their_ranges() {
        for k in 0..=1000 {
            let u = k as f64 / 1000.0;
            let n = Zone::ALL.iter().filter(|z| z.contains(u)).count();
            assert!(n <= 1, "u = {u} in {n} zones");
            if (0.10..=0.90).contains(&u) {
                assert_eq!(n, 1, "u = {u} uncovered");
            }
        }
        assert_eq!(Zone::of(0.45), Some(Zone::Zone3));
        assert_eq!(Zone::of(0.55), Some(Zone::Zone3));
        assert_eq!(Zone::of(0.05), None);
    }
}
