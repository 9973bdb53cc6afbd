//! Indentation dataset for the contact localisation model: a rod pressed
//! into the fixed finger at evenly spaced axial locations, in fixed
//! penetration increments.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::rng::SimRng;
use crate::types::{byte_to_pixel, pixel_to_byte, ContactState, TactileFrame, CHANNELS};

use super::render::Renderer;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClmDatasetSpec {
    pub n_locations: usize,
    /// m between neighbouring press locations; location k (1-based) sits at
    /// `k * location_step` from the base.
    pub location_step: f64,
    /// m
    pub penetration_step: f64,
    pub penetrations_per_location: usize,
    pub total_samples: usize,
    /// Deepest press as a fraction of the local membrane radius.
    pub depth_fraction: f64,
}

impl Default for ClmDatasetSpec {
    fn default() -> Self {
        Self {
            n_locations: 10,
            location_step: 0.005,
            penetration_step: 0.001,
            penetrations_per_location: 15,
            total_samples: 150,
            depth_fraction: 0.8,
        }
    }
}

impl ClmDatasetSpec {
    pub fn validate(&self, finger_length: f64) -> Result<()> {
        ensure(self.n_locations >= 1, "clm.n_locations", || "must be at least 1".into())?;
        ensure(self.location_step > 0.0, "clm.location_step", || "must be positive".into())?;
        ensure(self.penetration_step > 0.0, "clm.penetration_step", || "must be positive".into())?;
        ensure(self.penetrations_per_location >= 1, "clm.penetrations_per_location", || {
            "must be at least 1".into()
        })?;
        ensure(
            self.n_locations * self.penetrations_per_location >= self.total_samples,
            "clm.total_samples",
            || {
                format!(
                    "{} locations x {} penetrations cannot reach {} samples",
                    self.n_locations, self.penetrations_per_location, self.total_samples
                )
            },
        )?;
        ensure(self.depth_fraction > 0.0 && self.depth_fraction < 1.0, "clm.depth_fraction", || {
            "must lie in (0, 1)".into()
        })?;
        let extent = self.n_locations as f64 * self.location_step;
        ensure(extent < finger_length, "clm.location_step", || {
            format!("{} locations x {} m exceed the finger length {finger_length} m", self.n_locations, self.location_step)
        })
    }

    /// Label of location `k` (0-based index into the grid).
    pub fn label(&self, k: usize, finger_length: f64) -> f64 {
        (k + 1) as f64 * self.location_step / finger_length
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClmSample {
    pub frame: TactileFrame,
    pub u: f64,
    pub penetration: f64,
    /// Seed of the noise stream used for this frame.
    pub seed: u64,
}

/// Penetrations pressed at one location. Presses go in `step` increments up
/// to the local limit; further passes repeat the sweep offset by a fraction
/// of a step until `per_location` presses are made. A step deeper than the
/// limit gives a single press at the limit.
pub fn press_depths(step: f64, limit: f64, per_location: usize) -> Vec<f64> {
    if step > limit {
        return vec![limit];
    }
    let n_inc = ((limit / step) + 1e-9).floor() as usize;
    let passes = per_location.div_ceil(n_inc);
    (0..per_location)
        .map(|k| {
            let j = k % n_inc;
            let pass = k / n_inc;
            let offset = step * pass as f64 / passes as f64;
            step * (j + 1) as f64 - offset
        })
        .collect()
}

pub fn generate_clm_dataset(spec: &ClmDatasetSpec, renderer: &Renderer, rng: &SimRng) -> Result<Vec<ClmSample>> {
    let finger = &renderer.finger;
    spec.validate(finger.length)?;
    let mut out = Vec::new();
    for k in 0..spec.n_locations {
        let u = spec.label(k, finger.length);
        let limit = spec.depth_fraction * finger.radius_at(u);
        for depth in press_depths(spec.penetration_step, limit, spec.penetrations_per_location) {
            let idx = out.len() as u64;
            let mut noise = rng.split_index("clm-sample", idx);
            let contact = ContactState {
                in_contact: true,
                u,
                penetration: depth,
                normal_force: depth / finger.compliance_at(u),
                tangential_force: 0.0,
                sticking: true,
            };
            let frame = renderer.render(&contact, Some(&mut noise), 0.0);
            out.push(ClmSample {
                frame,
                u,
                penetration: depth,
                seed: noise.seed(),
            });
        }
    }
    Ok(out)
}

/// Store a dataset as `index.csv` plus one binary blob per frame:
/// `u32 H | u32 W | u32 C | u8 pixels (HWC)`, little-endian.
pub fn save_dataset(samples: &[ClmSample], dir: &Path) -> Result<()> {
    let frames = dir.join("frames");
    fs::create_dir_all(&frames).map_err(|e| Error::io(&frames, e))?;
    let mut index = String::from("file,label,penetration,seed\n");
    for (i, s) in samples.iter().enumerate() {
        let name = format!("{i:05}.bin");
        let path = frames.join(&name);
        write_frame(&s.frame, &path)?;
        index.push_str(&format!("frames/{name},{},{},{}\n", s.u, s.penetration, s.seed));
    }
    let path = dir.join("index.csv");
    fs::write(&path, index).map_err(|e| Error::io(&path, e))
}

pub fn write_frame(frame: &TactileFrame, path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(12 + frame.pixels.len());
    for v in [frame.size, frame.size, CHANNELS] {
        buf.extend_from_slice(&(v as u32).to_le_bytes());
    }
    buf.extend(frame.pixels.iter().map(|&p| pixel_to_byte(p)));
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_frame(path: &Path, timestamp: f64) -> Result<TactileFrame> {
    let mut buf = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    let bad = |m: &str| Error::validation(path.display().to_string(), m.to_string());
    if buf.len() < 12 {
        return Err(bad("truncated header"));
    }
    let word = |i: usize| u32::from_le_bytes(buf[4 * i..4 * i + 4].try_into().expect("4 bytes")) as usize;
    let (h, w, c) = (word(0), word(1), word(2));
    if h != w || c != CHANNELS || buf.len() != 12 + h * w * c {
        return Err(bad("header does not match payload"));
    }
    let pixels = buf[12..].iter().map(|&b| byte_to_pixel(b)).collect();
    TactileFrame::new(h, pixels, timestamp)
}

pub fn load_dataset(dir: &Path) -> Result<Vec<ClmSample>> {
    let path = dir.join("index.csv");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let parse_err = || Error::validation(format!("{}:{}", path.display(), n + 1), "malformed row");
        if cols.len() != 4 {
            return Err(parse_err());
        }
        let u: f64 = cols[1].parse().map_err(|_| parse_err())?;
        let penetration: f64 = cols[2].parse().map_err(|_| parse_err())?;
        let seed: u64 = cols[3].parse().map_err(|_| parse_err())?;
        let frame = read_frame(&dir.join(cols[0]), 0.0)?;
        out.push(ClmSample {
            frame,
            u,
            penetration,
            seed,
        });
    }
    Ok(out)
}
