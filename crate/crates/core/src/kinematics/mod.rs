//! Serial-chain kinematics: chain description, forward kinematics, the
//! geometric Jacobian and the damped least-squares IK solver.

mod ik;

use std::path::Path;

use nalgebra::{DMatrix, DVector, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Frame, GeometryError, Pose, UnitQuaternion, Vec3};

pub use ik::{dls_step, solve_ik, IkConfig, IkSolution, STEP_CAP};

const DEFAULT_CHAIN_TOML: &str = include_str!("../../configs/default_chain.toml");

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KinematicsError {
    #[error("expected {expected} joint values, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("joint {joint} at {value} rad is outside [{min}, {max}]")]
    LimitViolation {
        joint: usize,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("singular system: J·Jᵀ is rank deficient and damping is zero")]
    Singular,
    #[error(
        "IK did not converge after {iterations} iterations \
         (position residual {position_residual:.3e} m, rotation residual {rotation_residual:.3e} rad)"
    )]
    NoConvergence {
        best: JointState,
        position_residual: f64,
        rotation_residual: f64,
        iterations: usize,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid chain spec: {0}")]
    InvalidChain(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSpec {
    #[serde(default)]
    pub name: String,
    pub axis: Vec3,
    pub origin_offset: Vec3,
    pub limits: [f64; 2],
}

impl JointSpec {
    pub fn min(&self) -> f64 {
        self.limits[0]
    }

    pub fn max(&self) -> f64 {
        self.limits[1]
    }
}

/// Kinematic description of a serial chain of revolute joints.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSpec {
    pub name: String,
    pub joints: Vec<JointSpec>,
    pub base_frame: Pose,
    pub tool_offset: Vec3,
    pub home: JointState,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainFile {
    #[serde(default)]
    name: String,
    #[serde(default)]
    home: Option<Vec<f64>>,
    #[serde(default)]
    tool_offset: Option<[f64; 3]>,
    #[serde(default)]
    base: Option<BaseFile>,
    joints: Vec<JointFile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BaseFile {
    position: [f64; 3],
    orientation: UnitQuaternion,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JointFile {
    #[serde(default)]
    name: String,
    axis: [f64; 3],
    origin_offset: [f64; 3],
    limits: [f64; 2],
}

impl ChainSpec {
    /// Builds a chain, normalizing axes and checking every invariant.
    pub fn new(
        name: impl Into<String>,
        joints: Vec<JointSpec>,
        base_frame: Pose,
        tool_offset: Vec3,
        home: Option<JointState>,
    ) -> Result<Self, KinematicsError> {
        base_frame.expect_frame(Frame::RobotZup)?;
        if joints.is_empty() {
            return Err(KinematicsError::InvalidChain("chain has no joints".into()));
        }
        let mut normalized = Vec::with_capacity(joints.len());
        for (i, mut j) in joints.into_iter().enumerate() {
            j.axis = j
                .axis
                .normalized()
                .ok_or_else(|| KinematicsError::InvalidChain(format!("joint {i} has a degenerate axis")))?;
            if !j.origin_offset.is_finite() {
                return Err(KinematicsError::InvalidChain(format!("joint {i} offset is not finite")));
            }
            if !(j.min() < j.max()) {
                return Err(KinematicsError::InvalidChain(format!(
                    "joint {i} limits [{}, {}] are not increasing",
                    j.min(),
                    j.max()
                )));
            }
            normalized.push(j);
        }
        let dof = normalized.len();
        let home = home
            .unwrap_or_else(|| JointState::new(normalized.iter().map(|j| 0.0f64.clamp(j.min(), j.max())).collect()));
        let spec = Self {
            name: name.into(),
            joints: normalized,
            base_frame,
            tool_offset,
            home,
        };
        spec.check_limits(&spec.home)?;
        debug_assert_eq!(spec.dof(), dof);
        Ok(spec)
    }

    pub fn from_toml_str(s: &str) -> Result<Self, KinematicsError> {
        let file: ChainFile = toml::from_str(s).map_err(|e| KinematicsError::InvalidChain(e.to_string()))?;
        let joints = file
            .joints
            .into_iter()
            .map(|j| JointSpec {
                name: j.name,
                axis: Vec3::from_array(j.axis),
                origin_offset: Vec3::from_array(j.origin_offset),
                limits: j.limits,
            })
            .collect();
        let base = match file.base {
            Some(b) => Pose::robot(Vec3::from_array(b.position), b.orientation),
            None => Pose::robot(Vec3::ZERO, UnitQuaternion::IDENTITY),
        };
        Self::new(
            file.name,
            joints,
            base,
            file.tool_offset.map(Vec3::from_array).unwrap_or(Vec3::ZERO),
            file.home.map(JointState::new),
        )
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, KinematicsError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| KinematicsError::InvalidChain(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// The shipped generic 6R arm.
    pub fn default_6r() -> Self {
        Self::from_toml_str(DEFAULT_CHAIN_TOML).expect("bundled chain spec is valid")
    }

    pub fn default_toml() -> &'static str {
        DEFAULT_CHAIN_TOML
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn check_limits(&self, q: &JointState) -> Result<(), KinematicsError> {
        self.check_len(q)?;
        for (i, (j, &v)) in self.joints.iter().zip(q.as_slice()).enumerate() {
            if !(v >= j.min() && v <= j.max()) {
                return Err(KinematicsError::LimitViolation {
                    joint: i,
                    value: v,
                    min: j.min(),
                    max: j.max(),
                });
            }
        }
        Ok(())
    }

    fn check_len(&self, q: &JointState) -> Result<(), KinematicsError> {
        if q.len() != self.dof() {
            return Err(KinematicsError::DimensionMismatch {
                expected: self.dof(),
                found: q.len(),
            });
        }
        Ok(())
    }

    /// Clamps every joint into its position limits.
    pub fn clamp(&self, q: &mut JointState) {
        for (v, j) in q.0.iter_mut().zip(&self.joints) {
            *v = v.clamp(j.min(), j.max());
        }
    }

    /// Sum of link offsets: an upper bound on the distance the end effector
    /// can reach from the first joint.
    pub fn max_reach(&self) -> f64 {
        self.joints.iter().skip(1).map(|j| j.origin_offset.norm()).sum::<f64>() + self.tool_offset.norm()
    }

    // Joint origins and world axes, plus the end-effector pose.
    fn frames(&self, q: &JointState) -> (Vec<(Vec3, Vec3)>, Pose) {
        let mut pos = self.base_frame.position;
        let mut rot = self.base_frame.orientation;
        let mut out = Vec::with_capacity(self.dof());
        for (j, &angle) in self.joints.iter().zip(q.as_slice()) {
            pos += rot.rotate(j.origin_offset);
            out.push((pos, rot.rotate(j.axis)));
            rot = rot * UnitQuaternion::from_axis_angle(j.axis, angle);
        }
        pos += rot.rotate(self.tool_offset);
        (out, Pose::robot(pos, rot))
    }
}

impl Default for ChainSpec {
    fn default() -> Self {
        Self::default_6r()
    }
}

/// Joint configuration in radians, one entry per joint.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointState(pub Vec<f64>);

impl JointState {
    pub fn new(q: Vec<f64>) -> Self {
        Self(q)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Largest absolute per-joint difference.
    pub fn max_abs_diff(&self, other: &JointState) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl From<Vec<f64>> for JointState {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// 6×dof geometric Jacobian; rows are linear then angular velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian(pub DMatrix<f64>);

impl Jacobian {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }
}

/// Task-space error: position (m) stacked over rotation vector (rad).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskError(pub Vector6<f64>);

impl TaskError {
    /// Error that drives `current` towards `target`. The rotational part is
    /// the log map of `target ⊗ current⁻¹`, so its magnitude is at most π.
    pub fn between(current: &Pose, target: &Pose) -> Result<Self, GeometryError> {
        target.expect_frame(current.frame)?;
        let dp = target.position - current.position;
        let dr = (target.orientation * current.orientation.conjugate()).to_rotation_vector();
        Ok(Self(Vector6::new(dp.x, dp.y, dp.z, dr.x, dr.y, dr.z)))
    }

    pub fn zero() -> Self {
        Self(Vector6::zeros())
    }

    pub fn position_norm(&self) -> f64 {
        self.0.fixed_rows::<3>(0).norm()
    }

    pub fn rotation_norm(&self) -> f64 {
        self.0.fixed_rows::<3>(3).norm()
    }
}

pub fn forward_kinematics(spec: &ChainSpec, q: &JointState) -> Result<Pose, KinematicsError> {
    spec.check_limits(q)?;
    Ok(spec.frames(q).1)
}

pub fn jacobian(spec: &ChainSpec, q: &JointState) -> Result<Jacobian, KinematicsError> {
    spec.check_limits(q)?;
    Ok(jacobian_unchecked(spec, q).0)
}

// Shared by the solver, which keeps its iterates inside limits itself.
pub(crate) fn jacobian_unchecked(spec: &ChainSpec, q: &JointState) -> (Jacobian, Pose) {
    let (frames, ee) = spec.frames(q);
    let mut j = DMatrix::zeros(6, spec.dof());
    for (i, (origin, axis)) in frames.iter().enumerate() {
        let lin = axis.cross(ee.position - *origin);
        j.column_mut(i).copy_from(&DVector::from_column_slice(&[
            lin.x, lin.y, lin.z, axis.x, axis.y, axis.z,
        ]));
    }
    (Jacobian(j), ee)
}

#[cfg(test)]
pub(crate) fn fk_unchecked(spec: &ChainSpec, q: &JointState) -> Pose {
    spec.frames(q).1
}
