//! Domain values shared by every module.
//!
//! Orientation is Euler angles in the extrinsic X-Y-Z convention:
//! `R = Rz(yaw) * Ry(pitch) * Rx(roll)`, each angle in (-pi, pi].
//! All timestamps are seconds since rollout start.

use std::f64::consts::PI;

use nalgebra::{Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

pub type Vec3 = Vector3<f64>;

/// Wrap an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut x = a % (2.0 * PI);
    if x <= -PI {
        x += 2.0 * PI;
    } else if x > PI {
        x -= 2.0 * PI;
    }
    x
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    /// Meters, robot-base frame.
    pub position: [f64; 3],
    /// Extrinsic XYZ Euler angles, radians.
    pub orientation: [f64; 3],
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            position: [0.0; 3],
            orientation: [0.0; 3],
        }
    }

    pub fn new(position: [f64; 3], orientation: [f64; 3]) -> Self {
        Self {
            position,
            orientation: orientation.map(wrap_angle),
        }
    }

    pub fn from_parts(position: Vec3, rotation: &Rotation3<f64>) -> Self {
        let (r, p, y) = rotation.euler_angles();
        Self::new([position.x, position.y, position.z], [r, p, y])
    }

    pub fn translation(&self) -> Vec3 {
        Vec3::from(self.position)
    }

    pub fn rotation(&self) -> Rotation3<f64> {
        let [r, p, y] = self.orientation;
        Rotation3::from_euler_angles(r, p, y)
    }

    /// `self * other`: `other` expressed in this pose's frame.
    pub fn compose(&self, other: &Pose) -> Pose {
        let rot = self.rotation();
        let pos = self.translation() + rot * other.translation();
        Pose::from_parts(pos, &(rot * other.rotation()))
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.translation() + self.rotation() * p
    }

    /// Advance by a world-frame twist held for `dt`.
    pub fn integrate(&self, twist: &Twist, dt: f64) -> Pose {
        let pos = self.translation() + Vec3::from(twist.linear) * dt;
        let omega = Vec3::from(twist.angular) * dt;
        let rot = Rotation3::new(omega) * self.rotation();
        Pose::from_parts(pos, &rot)
    }

    /// Six-vector `(x, y, z, roll, pitch, yaw)`.
    pub fn to_array(&self) -> [f64; 6] {
        let [x, y, z] = self.position;
        let [a, b, c] = self.orientation;
        [x, y, z, a, b, c]
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().chain(&self.orientation).all(|v| v.is_finite())
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.is_finite(), "pose", || format!("non-finite pose {self:?}"))?;
        ensure(
            self.orientation.iter().all(|a| *a > -PI && *a <= PI),
            "pose.orientation",
            || format!("Euler angles must lie in (-pi, pi], got {:?}", self.orientation),
        )
    }
}

/// End-effector velocity: linear m/s and angular rad/s, world frame,
/// angular part about the end-effector origin.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Twist {
    pub linear: [f64; 3],
    pub angular: [f64; 3],
}

impl Twist {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn to_array(&self) -> [f64; 6] {
        let [a, b, c] = self.linear;
        let [d, e, f] = self.angular;
        [a, b, c, d, e, f]
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        Self {
            linear: [v[0], v[1], v[2]],
            angular: [v[3], v[4], v[5]],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// End-effector pose sample; the robot action fed to the forecasters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub pose: Pose,
    pub timestamp: f64,
}

/// Synthetic tactile image, `height x width x 3`, row-major HWC, values in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct TactileFrame {
    pub size: usize,
    pub pixels: Vec<f32>,
    pub timestamp: f64,
}

pub const CHANNELS: usize = 3;

/// Pixels are 8-bit camera intensities stored as `k / 255`.
pub fn pixel_to_byte(p: f32) -> u8 {
    (p.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn byte_to_pixel(b: u8) -> f32 {
    f32::from(b) / 255.0
}

impl TactileFrame {
    pub fn new(size: usize, pixels: Vec<f32>, timestamp: f64) -> Result<Self> {
        ensure(size == 32 || size == 64, "resolution", || {
            format!("tactile frames are 32x32 or 64x64, got {size}")
        })?;
        ensure(pixels.len() == size * size * CHANNELS, "pixels", || {
            format!("expected {} values, got {}", size * size * CHANNELS, pixels.len())
        })?;
        ensure(
            pixels.iter().all(|p| (0.0..=1.0).contains(p)),
            "pixels",
            || "pixel values must lie in [0, 1]".into(),
        )?;
        Ok(Self {
            size,
            pixels,
            timestamp,
        })
    }

    pub fn get(&self, row: usize, col: usize, ch: usize) -> f32 {
        self.pixels[(row * self.size + col) * CHANNELS + ch]
    }

    /// Channel-major tensor `[3, H, W]` for the networks.
    pub fn to_tensor(&self) -> stempush_nn::Tensor {
        let n = self.size * self.size;
        let mut data = vec![0.0; n * CHANNELS];
        for (i, px) in self.pixels.chunks_exact(CHANNELS).enumerate() {
            for c in 0..CHANNELS {
                data[c * n + i] = f64::from(px[c]);
            }
        }
        stempush_nn::Tensor::from_vec(&[CHANNELS, self.size, self.size], data)
    }

    /// Inverse of [`to_tensor`](Self::to_tensor); values are clamped to [0, 1].
    pub fn from_tensor(t: &stempush_nn::Tensor, timestamp: f64) -> Self {
        let (c, h, w) = t.chw();
        assert_eq!(c, CHANNELS);
        assert_eq!(h, w);
        let n = h * w;
        let mut pixels = vec![0f32; n * CHANNELS];
        for i in 0..n {
            for ch in 0..CHANNELS {
                pixels[i * CHANNELS + ch] = t.data()[ch * n + i].clamp(0.0, 1.0) as f32;
            }
        }
        Self {
            size: h,
            pixels,
            timestamp,
        }
    }
}

/// Ground-truth contact between the tracked stem and the finger.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactState {
    pub in_contact: bool,
    /// Axial contact coordinate, 0 at the sensor base (camera), 1 at the tip.
    pub u: f64,
    /// Meters, >= 0.
    pub penetration: f64,
    /// Newtons, >= 0.
    pub normal_force: f64,
    /// Newtons along the finger axis, signed (force on the stem).
    pub tangential_force: f64,
    pub sticking: bool,
}

impl ContactState {
    pub fn none() -> Self {
        Self {
            in_contact: false,
            u: 0.0,
            penetration: 0.0,
            normal_force: 0.0,
            tangential_force: 0.0,
            sticking: false,
        }
    }

    pub fn check_invariants(&self) -> Result<()> {
        ensure((0.0..=1.0).contains(&self.u), "contact.u", || format!("{} outside [0, 1]", self.u))?;
        ensure(self.normal_force >= 0.0, "contact.normal_force", || {
            format!("{} < 0", self.normal_force)
        })?;
        ensure(self.penetration >= 0.0, "contact.penetration", || {
            format!("{} < 0", self.penetration)
        })?;
        if !self.in_contact {
            ensure(
                self.penetration == 0.0 && self.normal_force == 0.0 && self.tangential_force == 0.0,
                "contact",
                || "forces must vanish out of contact".into(),
            )?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyncedSample {
    pub frame: TactileFrame,
    pub action: Action,
    /// `|frame.timestamp - action.timestamp|`, seconds.
    pub skew: f64,
}
