use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{PoseSample, Source};
use crate::geometry::{Plane, Pose, UnitQuaternion, Vec3};

pub const DEFAULT_SAMPLE_RATE: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ShapeError {
    #[error("shape dimension `{0}` must be positive and finite")]
    BadDimension(&'static str),
    #[error("period must be positive and finite")]
    BadPeriod,
    #[error("sample rate must be positive and finite")]
    BadSampleRate,
    #[error("center must be finite")]
    BadCenter,
}

/// Planar outline, dimensions in meters. `u`/`v` are the plane's first and
/// second axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapeKind {
    Circle {
        radius: f64,
    },
    Square {
        side: f64,
    },
    Rectangle {
        width: f64,
        height: f64,
    },
    /// Two tangent semicircles, each of diameter `size`, spanning `2·size` along `u`.
    SShape {
        size: f64,
    },
}

impl ShapeKind {
    pub fn name(&self) -> &'static str {
        match self {
            ShapeKind::Circle { .. } => "circle",
            ShapeKind::Square { .. } => "square",
            ShapeKind::Rectangle { .. } => "rectangle",
            ShapeKind::SShape { .. } => "s_shape",
        }
    }

    pub fn path_length(&self) -> f64 {
        match *self {
            ShapeKind::Circle { radius } => TAU * radius,
            ShapeKind::Square { side } => 4.0 * side,
            ShapeKind::Rectangle { width, height } => 2.0 * (width + height),
            ShapeKind::SShape { size } => PI * size,
        }
    }

    /// In-plane point at normalized phase `s ∈ [0, 1)`.
    fn point(&self, s: f64) -> (f64, f64) {
        match *self {
            ShapeKind::Circle { radius } => {
                let (sin, cos) = (TAU * s).sin_cos();
                (radius * cos, radius * sin)
            }
            ShapeKind::Square { side } => rectangle_point(side, side, s),
            ShapeKind::Rectangle { width, height } => rectangle_point(width, height, s),
            ShapeKind::SShape { size } => {
                let r = 0.5 * size;
                if s < 0.5 {
                    // Upper arc about (−r, 0), from (−2r, 0) clockwise to the origin.
                    let th = PI - TAU * s;
                    (-r + r * th.cos(), r * th.sin())
                } else {
                    // Lower arc about (r, 0), from the origin counterclockwise to (2r, 0).
                    let th = PI + TAU * (s - 0.5);
                    (r + r * th.cos(), r * th.sin())
                }
            }
        }
    }

    fn dimensions(&self) -> Vec<(&'static str, f64)> {
        match *self {
            ShapeKind::Circle { radius } => vec![("radius", radius)],
            ShapeKind::Square { side } => vec![("side", side)],
            ShapeKind::Rectangle { width, height } => vec![("width", width), ("height", height)],
            ShapeKind::SShape { size } => vec![("size", size)],
        }
    }
}

/// Counterclockwise from the (+, +) corner at constant speed.
fn rectangle_point(w: f64, h: f64, s: f64) -> (f64, f64) {
    let (hw, hh) = (0.5 * w, 0.5 * h);
    let mut d = s * 2.0 * (w + h);
    if d < w {
        return (hw - d, hh);
    }
    d -= w;
    if d < h {
        return (-hw, hh - d);
    }
    d -= h;
    if d < w {
        return (-hw + d, -hh);
    }
    d -= w;
    (hw, -hh + d.min(h))
}

fn default_sample_rate() -> f64 {
    DEFAULT_SAMPLE_RATE
}

fn identity() -> UnitQuaternion {
    UnitQuaternion::IDENTITY
}

/// A periodic target trajectory traced in a coordinate plane through `center`
/// with a fixed tool orientation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    #[serde(flatten)]
    pub kind: ShapeKind,
    #[serde(default)]
    pub center: Vec3,
    #[serde(default)]
    pub plane: Plane,
    /// Seconds per lap.
    pub period: f64,
    #[serde(default = "default_sample_rate")]
    pub sample_rate: f64,
    #[serde(default = "identity")]
    pub orientation: UnitQuaternion,
}

impl ShapeSpec {
    pub fn new(kind: ShapeKind, center: Vec3, plane: Plane, period: f64) -> Result<Self, ShapeError> {
        let spec = Self {
            kind,
            center,
            plane,
            period,
            sample_rate: DEFAULT_SAMPLE_RATE,
            orientation: UnitQuaternion::IDENTITY,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_orientation(mut self, q: UnitQuaternion) -> Self {
        self.orientation = q;
        self
    }

    pub fn with_sample_rate(mut self, hz: f64) -> Result<Self, ShapeError> {
        self.sample_rate = hz;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), ShapeError> {
        for (name, v) in self.kind.dimensions() {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ShapeError::BadDimension(name));
            }
        }
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(ShapeError::BadPeriod);
        }
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(ShapeError::BadSampleRate);
        }
        if !self.center.is_finite() {
            return Err(ShapeError::BadCenter);
        }
        Ok(())
    }

    pub fn position_at(&self, t: f64) -> Vec3 {
        let s = (t / self.period).rem_euclid(1.0);
        let (u, v) = self.kind.point(s);
        self.center + self.plane.embed(u, v)
    }

    /// `n` samples at the configured rate starting from `t = 0`.
    pub fn samples(&self, n: usize) -> impl Iterator<Item = PoseSample> + '_ {
        (0..n).map(|k| autopilot_pose(self, k as f64 / self.sample_rate))
    }

    /// Sample count covering `duration` seconds at the configured rate.
    pub fn sample_count(&self, duration: f64) -> usize {
        (duration * self.sample_rate - 1e-9).ceil().max(0.0) as usize
    }
}

/// Target pose on `shape` at time `t` seconds.
pub fn autopilot_pose(shape: &ShapeSpec, t: f64) -> PoseSample {
    PoseSample {
        t,
        pose: Pose::robot(shape.position_at(t), shape.orientation),
        source: Source::Autopilot,
        latency_hint: None,
        seq: None,
    }
}
