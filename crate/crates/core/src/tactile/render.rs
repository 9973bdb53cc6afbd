//! Synthetic marker-pattern images of the finger membrane.
//!
//! The unrolled membrane maps axial `u` to image rows (row 0 at the camera)
//! and circumferential `v` to columns. Channels:
//! 0. markers at rest,
//! 1. markers at their displaced positions,
//! 2. displaced markers painted with their displacement magnitude.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::rng::SimRng;
use crate::simworld::FingerModel;
use crate::types::{byte_to_pixel, pixel_to_byte, ContactState, TactileFrame, CHANNELS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkerLayout {
    pub size: usize,
    pub rows: usize,
    pub cols: usize,
    /// Pixels.
    pub dot_radius: f64,
    /// Normalized `(u, v)` marker centers, row-major.
    pub centers: Vec<(f64, f64)>,
}

impl MarkerLayout {
    /// Regular grid with markers at cell centers.
    pub fn grid(size: usize, rows: usize, cols: usize) -> Result<Self> {
        ensure(size == 32 || size == 64, "resolution", || format!("{size} not in {{32, 64}}"))?;
        ensure(rows >= 2 && cols >= 1, "layout", || "need at least 2 rows and 1 column".into())?;
        let pitch = size as f64 / rows.max(cols) as f64;
        ensure(pitch >= 3.0, "layout", || format!("{rows}x{cols} markers do not fit in {size} px"))?;
        let mut centers = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                centers.push(((i as f64 + 0.5) / rows as f64, (j as f64 + 0.5) / cols as f64));
            }
        }
        Ok(Self {
            size,
            rows,
            cols,
            dot_radius: 0.25 * pitch,
            centers,
        })
    }

    /// Axial spacing between marker rows in normalized units.
    pub fn pitch_u(&self) -> f64 {
        1.0 / self.rows as f64
    }

    fn pitch_px(&self) -> f64 {
        self.size as f64 / self.rows.max(self.cols) as f64
    }

    pub fn to_pixel(&self, u: f64, v: f64) -> (f64, f64) {
        (u * self.size as f64, v * self.size as f64)
    }
}

/// Parameters of the membrane deformation field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    /// Axial width of the bump, normalized.
    pub sigma_u: f64,
    /// Circumferential width of the bump, normalized.
    pub sigma_v: f64,
    /// Largest marker displacement as a fraction of the marker pitch.
    pub max_displacement: f64,
    /// Amplitude growth per meter of compliance-weighted penetration.
    pub gain: f64,
    /// Gaussian pixel noise std; 0 disables noise.
    pub noise_std: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            sigma_u: 0.15,
            sigma_v: 0.3,
            max_displacement: 0.45,
            gain: 300.0,
            noise_std: 0.02,
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<()> {
        ensure(self.sigma_u > 0.0 && self.sigma_v > 0.0, "render.sigma", || "must be positive".into())?;
        ensure(self.max_displacement > 0.0 && self.max_displacement < 1.0, "render.max_displacement", || {
            "must lie in (0, 1)".into()
        })?;
        ensure(self.gain > 0.0, "render.gain", || "must be positive".into())?;
        ensure(self.noise_std >= 0.0, "render.noise_std", || "must be non-negative".into())
    }
}

/// Gaussian bump at `u_c` with amplitude in pixels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeformationField {
    pub u_c: f64,
    pub amplitude: f64,
    pub sigma: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Renderer {
    pub layout: MarkerLayout,
    pub config: RenderConfig,
    pub finger: FingerModel,
}

impl Renderer {
    pub fn new(layout: MarkerLayout, config: RenderConfig, finger: FingerModel) -> Result<Self> {
        config.validate()?;
        finger.validate()?;
        Ok(Self { layout, config, finger })
    }

    pub fn size(&self) -> usize {
        self.layout.size
    }

    pub fn max_amplitude(&self) -> f64 {
        self.config.max_displacement * self.layout.pitch_px()
    }

    /// Deformation produced by a contact; zero amplitude without contact.
    pub fn field(&self, contact: &ContactState) -> DeformationField {
        let amplitude = if contact.in_contact && contact.penetration > 0.0 {
            let c_ref = self.finger.compliance_at(0.5);
            let weighted = contact.penetration * self.finger.compliance_at(contact.u) / c_ref;
            self.max_amplitude() * (self.config.gain * weighted).tanh()
        } else {
            0.0
        };
        DeformationField {
            u_c: contact.u,
            amplitude,
            sigma: self.config.sigma_u,
        }
    }

    /// Marker displacements in pixels `(d_row, d_col)` for superimposed fields.
    pub fn displacements(&self, fields: &[DeformationField]) -> Vec<(f64, f64)> {
        let n = self.layout.size as f64;
        let sv = self.config.sigma_v;
        self.layout
            .centers
            .iter()
            .map(|&(u, v)| {
                let mut d = (0.0, 0.0);
                for f in fields.iter().filter(|f| f.amplitude > 0.0) {
                    let du = u - f.u_c;
                    let dv = v - 0.5;
                    let g = (-0.5 * (du * du / (f.sigma * f.sigma) + dv * dv / (sv * sv))).exp();
                    let (pu, pv) = (du * n, dv * n);
                    let r = pu.hypot(pv);
                    if r > 0.0 {
                        d.0 += f.amplitude * g * pu / r;
                        d.1 += f.amplitude * g * pv / r;
                    }
                }
                d
            })
            .collect()
    }

    /// Render one contact.
    pub fn render(&self, contact: &ContactState, noise: Option<&mut SimRng>, timestamp: f64) -> TactileFrame {
        self.render_all(std::slice::from_ref(contact), noise, timestamp)
    }

    /// Render several simultaneous contacts (target plus distractors).
    pub fn render_all(&self, contacts: &[ContactState], noise: Option<&mut SimRng>, timestamp: f64) -> TactileFrame {
        let fields: Vec<_> = contacts.iter().map(|c| self.field(c)).collect();
        let disp = self.displacements(&fields);
        let size = self.layout.size;
        let mut px = vec![0f32; size * size * CHANNELS];
        let a_max = self.max_amplitude();
        for (k, &(u, v)) in self.layout.centers.iter().enumerate() {
            let (r0, c0) = self.layout.to_pixel(u, v);
            self.paint_disc(&mut px, r0, c0, 0, 1.0);
            let (dr, dc) = disp[k];
            self.paint_disc(&mut px, r0 + dr, c0 + dc, 1, 1.0);
            let mag = (dr.hypot(dc) / a_max).min(1.0);
            if mag > 0.0 {
                self.paint_disc(&mut px, r0 + dr, c0 + dc, 2, mag);
            }
        }
        if let Some(rng) = noise {
            if self.config.noise_std > 0.0 {
                let normal = Normal::new(0.0, self.config.noise_std).expect("validated std");
                for p in px.iter_mut() {
                    *p = (f64::from(*p) + normal.sample(rng)).clamp(0.0, 1.0) as f32;
                }
            }
        }
        // 8-bit camera
        for p in px.iter_mut() {
            *p = byte_to_pixel(pixel_to_byte(*p));
        }
        TactileFrame {
            size,
            pixels: px,
            timestamp,
        }
    }

    /// Anti-aliased disc; overlapping paint keeps the maximum.
    fn paint_disc(&self, px: &mut [f32], row: f64, col: f64, ch: usize, value: f64) {
        let size = self.layout.size as isize;
        let rad = self.layout.dot_radius;
        let lo_r = ((row - rad - 1.0).floor() as isize).max(0);
        let hi_r = ((row + rad + 1.0).ceil() as isize).min(size - 1);
        let lo_c = ((col - rad - 1.0).floor() as isize).max(0);
        let hi_c = ((col + rad + 1.0).ceil() as isize).min(size - 1);
        for i in lo_r..=hi_r {
            for j in lo_c..=hi_c {
                let dist = (i as f64 + 0.5 - row).hypot(j as f64 + 0.5 - col);
                let cover = (rad + 0.5 - dist).clamp(0.0, 1.0);
                if cover > 0.0 {
                    let idx = (i as usize * self.layout.size + j as usize) * CHANNELS + ch;
                    let val = (cover * value) as f32;
                    if val > px[idx] {
                        px[idx] = val;
                    }
                }
            }
        }
    }

    pub fn rest_image(&self) -> TactileFrame {
        self.render(&ContactState::none(), None, 0.0)
    }
}

/// Sum of marker displacement magnitudes for a frame's contact.
pub fn total_displacement(renderer: &Renderer, contact: &ContactState) -> f64 {
    renderer
        .displacements(&[renderer.field(contact)])
        .iter()
        .map(|(a, b)| a.hypot(*b))
        .sum()
}

/// Heat-channel row profile: sum over columns of channel 2.
pub fn heat_rows(frame: &TactileFrame) -> Vec<f64> {
    (0..frame.size)
        .map(|r| (0..frame.size).map(|c| f64::from(frame.get(r, c, 2))).sum())
        .collect()
}

/// Whether the frame shows a contact: peak heat above `threshold`.
pub fn contact_visible(frame: &TactileFrame, threshold: f64) -> bool {
    frame.pixels.chunks_exact(CHANNELS).any(|p| f64::from(p[2]) > threshold)
}
