//! Spatial value types shared by every stage of the pipeline.
//!
//! Quaternions are stored `(w, x, y, z)` and are always unit-norm: every
//! constructor and every product renormalizes, and degenerate (zero or
//! non-finite) input is rejected rather than patched up.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Maximum tolerated deviation of a stored quaternion from unit norm.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum GeometryError {
    #[error("quaternion has zero norm")]
    ZeroQuaternion,
    #[error("non-finite component in {0}")]
    NonFinite(&'static str),
    #[error("frame mismatch: expected {expected}, found {found}")]
    FrameMismatch { expected: Frame, found: Frame },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    /// Checked constructor for data crossing a trust boundary.
    pub fn try_new(x: f64, y: f64, z: f64) -> Result<Self, GeometryError> {
        let v = Self::new(x, y, z);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(GeometryError::NonFinite("vector"))
        }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scale(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).norm()
    }

    /// Returns `None` for vectors too short to carry a direction.
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        (n > 1e-12 && n.is_finite()).then(|| self.scale(1.0 / n))
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        self.scale(s)
    }
}

/// Rotation stored as a unit quaternion `(w, x, y, z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UnitQuaternion {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl UnitQuaternion {
    pub const IDENTITY: UnitQuaternion = UnitQuaternion {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    /// Normalizes `(w, x, y, z)`. Zero-norm or non-finite input is an error.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Result<Self, GeometryError> {
        if !(w.is_finite() && x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(GeometryError::NonFinite("quaternion"));
        }
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if n < 1e-12 {
            return Err(GeometryError::ZeroQuaternion);
        }
        Ok(Self {
            w: w / n,
            x: x / n,
            y: y / n,
            z: z / n,
        })
    }

    /// Rotation of `angle` radians about `axis`. A zero axis yields identity.
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        match axis.normalized() {
            Some(a) => {
                let (s, c) = (angle * 0.5).sin_cos();
                Self::renormalized(c, a.x * s, a.y * s, a.z * s)
            }
            None => Self::IDENTITY,
        }
    }

    /// Exponential map: rotation vector (axis · angle) to quaternion.
    pub fn from_rotation_vector(v: Vec3) -> Self {
        let angle = v.norm();
        if angle < 1e-12 {
            return Self::renormalized(1.0, v.x * 0.5, v.y * 0.5, v.z * 0.5);
        }
        Self::from_axis_angle(v, angle)
    }

    // Internal: the components are known to be finite and near unit norm.
    fn renormalized(w: f64, x: f64, y: f64, z: f64) -> Self {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        Self {
            w: w / n,
            x: x / n,
            y: y / n,
            z: z / n,
        }
    }

    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn to_wxyz(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn conjugate(self) -> Self {
        Self {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    /// Hamilton product `self ⊗ rhs`: applies `rhs` first, then `self`.
    pub fn multiply(self, rhs: Self) -> Self {
        let (a, b) = (self, rhs);
        Self::renormalized(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
    }

    pub fn rotate(self, v: Vec3) -> Vec3 {
        // v' = v + 2w(u × v) + 2u × (u × v)
        let u = Vec3::new(self.x, self.y, self.z);
        let t = u.cross(v).scale(2.0);
        v + t.scale(self.w) + u.cross(t)
    }

    /// Log map, with the shorter of the two equivalent rotations chosen so
    /// the result has magnitude at most π.
    pub fn to_rotation_vector(self) -> Vec3 {
        let (w, v) = if self.w < 0.0 {
            (-self.w, Vec3::new(-self.x, -self.y, -self.z))
        } else {
            (self.w, Vec3::new(self.x, self.y, self.z))
        };
        let s = v.norm();
        if s < 1e-12 {
            return v.scale(2.0);
        }
        let angle = 2.0 * s.atan2(w);
        v.scale(angle / s)
    }

    /// Rotation angle in `[0, π]` separating `self` from `other`.
    pub fn angle_to(self, other: Self) -> f64 {
        self.conjugate().multiply(other).to_rotation_vector().norm()
    }

    /// Spherical interpolation along the shorter arc; `t = 0` gives `self`.
    pub fn slerp(self, other: Self, t: f64) -> Self {
        let mut dot = self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z;
        let mut o = other;
        if dot < 0.0 {
            dot = -dot;
            o = Self {
                w: -o.w,
                x: -o.x,
                y: -o.y,
                z: -o.z,
            };
        }
        if dot > 1.0 - 1e-12 {
            return Self::renormalized(
                self.w + (o.w - self.w) * t,
                self.x + (o.x - self.x) * t,
                self.y + (o.y - self.y) * t,
                self.z + (o.z - self.z) * t,
            );
        }
        let theta = dot.min(1.0).acos();
        let sin_theta = theta.sin();
        let a = ((1.0 - t) * theta).sin() / sin_theta;
        let b = (t * theta).sin() / sin_theta;
        Self::renormalized(
            a * self.w + b * o.w,
            a * self.x + b * o.x,
            a * self.y + b * o.y,
            a * self.z + b * o.z,
        )
    }

    /// Row-major 3×3 rotation matrix.
    pub fn to_matrix(self) -> [[f64; 3]; 3] {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        [
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ]
    }
}

impl Default for UnitQuaternion {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Mul for UnitQuaternion {
    type Output = UnitQuaternion;
    fn mul(self, rhs: UnitQuaternion) -> UnitQuaternion {
        self.multiply(rhs)
    }
}

impl<'de> Deserialize<'de> for UnitQuaternion {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            w: f64,
            x: f64,
            y: f64,
            z: f64,
        }
        let r = Raw::deserialize(d)?;
        UnitQuaternion::new(r.w, r.x, r.y, r.z).map_err(serde::de::Error::custom)
    }
}

pub fn quat_multiply(a: UnitQuaternion, b: UnitQuaternion) -> UnitQuaternion {
    a.multiply(b)
}

pub fn quat_rotate(q: UnitQuaternion, v: Vec3) -> Vec3 {
    q.rotate(v)
}

/// Coordinate frame a pose is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Frame {
    /// Right-handed, Y-up frame of AR tracking sessions.
    ArYup,
    /// Right-handed, Z-up robot base frame.
    RobotZup,
}

impl fmt::Display for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Frame::ArYup => "AR_YUP",
            Frame::RobotZup => "ROBOT_ZUP",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    pub orientation: UnitQuaternion,
    pub frame: Frame,
}

impl Pose {
    pub fn new(position: Vec3, orientation: UnitQuaternion, frame: Frame) -> Self {
        Self {
            position,
            orientation,
            frame,
        }
    }

    pub fn robot(position: Vec3, orientation: UnitQuaternion) -> Self {
        Self::new(position, orientation, Frame::RobotZup)
    }

    pub fn expect_frame(&self, frame: Frame) -> Result<(), GeometryError> {
        if self.frame == frame {
            Ok(())
        } else {
            Err(GeometryError::FrameMismatch {
                expected: frame,
                found: self.frame,
            })
        }
    }

    /// Euclidean position distance; rejects poses in different frames.
    pub fn position_distance(&self, other: &Pose) -> Result<f64, GeometryError> {
        other.expect_frame(self.frame)?;
        Ok(self.position.distance(other.position))
    }
}

/// Default AR→robot rotation: `[0.707, 0, -0.707, 0]` read as `(w, x, y, z)`,
/// i.e. −90° about Y.
pub fn default_q_fix() -> UnitQuaternion {
    UnitQuaternion::new(0.707, 0.0, -0.707, 0.0).expect("constant is non-degenerate")
}

/// Maps an AR (Y-up) pose into the robot base frame by the fixed rotation `q_fix`.
pub fn homogenize(p: &Pose, q_fix: UnitQuaternion) -> Result<Pose, GeometryError> {
    p.expect_frame(Frame::ArYup)?;
    Ok(Pose {
        position: q_fix.rotate(p.position),
        orientation: q_fix.multiply(p.orientation),
        frame: Frame::RobotZup,
    })
}

/// A coordinate plane, named by the two world axes spanning it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Plane {
    #[default]
    Xy,
    Xz,
    Yz,
}

impl Plane {
    /// In-plane coordinates `(u, v)` of a point.
    pub fn project(self, p: Vec3) -> (f64, f64) {
        match self {
            Plane::Xy => (p.x, p.y),
            Plane::Xz => (p.x, p.z),
            Plane::Yz => (p.y, p.z),
        }
    }

    /// World offset for in-plane coordinates `(u, v)`.
    pub fn embed(self, u: f64, v: f64) -> Vec3 {
        match self {
            Plane::Xy => Vec3::new(u, v, 0.0),
            Plane::Xz => Vec3::new(u, 0.0, v),
            Plane::Yz => Vec3::new(0.0, u, v),
        }
    }
}

impl std::str::FromStr for Plane {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "XY" => Ok(Plane::Xy),
            "XZ" => Ok(Plane::Xz),
            "YZ" => Ok(Plane::Yz),
            other => Err(format!("unknown plane `{other}` (expected XY, XZ or YZ)")),
        }
    }
}
