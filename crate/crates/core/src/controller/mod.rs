//! The position-centric control stage: IK → velocity safety filter →
//! command integration, plus the simulated plant executing the commands.

mod plant;
mod qp;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Frame, GeometryError, Pose};
use crate::kinematics::{solve_ik, ChainSpec, IkConfig, JointState, KinematicsError};

pub use plant::{plant_step, PlantState};
pub use qp::{
    acceleration_box, feasible_box, qp_safety_filter, solve_in_box, BoxQp, BoxQpSolution, PgdOptions, QpMethod,
    VelocityBounds,
};

/// Nominal loop period (200 Hz).
pub const DEFAULT_DT: f64 = 0.005;
/// Measured real-time periods are clamped into this range.
pub const DT_RANGE: (f64, f64) = (0.001, 0.02);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControllerError {
    #[error("expected {expected} joints, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("time step must be positive, got {0}")]
    NonPositiveDt(f64),
    #[error("velocity and acceleration boxes do not intersect for joint {joint}")]
    InfeasibleBox { joint: usize },
    #[error("invalid safety limits: {0}")]
    InvalidLimits(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Per-joint velocity (rad/s) and acceleration (rad/s²) bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyLimits {
    pub qdot_min: Vec<f64>,
    pub qdot_max: Vec<f64>,
    pub accel_max: Vec<f64>,
}

impl SafetyLimits {
    pub fn new(qdot_min: Vec<f64>, qdot_max: Vec<f64>, accel_max: Vec<f64>) -> Result<Self, ControllerError> {
        let l = Self {
            qdot_min,
            qdot_max,
            accel_max,
        };
        l.validate()?;
        Ok(l)
    }

    /// Symmetric `±vmax` velocity bounds and `amax` acceleration on every joint.
    pub fn uniform(dof: usize, vmax: f64, amax: f64) -> Self {
        Self::new(vec![-vmax; dof], vec![vmax; dof], vec![amax; dof]).expect("uniform limits must be positive")
    }

    /// 1.5 rad/s and 10 rad/s² on every joint.
    pub fn default_for(dof: usize) -> Self {
        Self::uniform(dof, 1.5, 10.0)
    }

    pub fn dof(&self) -> usize {
        self.qdot_max.len()
    }

    pub fn validate(&self) -> Result<(), ControllerError> {
        let n = self.qdot_max.len();
        if self.qdot_min.len() != n || self.accel_max.len() != n {
            return Err(ControllerError::InvalidLimits("vectors differ in length".into()));
        }
        for i in 0..n {
            if !(self.qdot_min[i] < 0.0 && 0.0 < self.qdot_max[i])
                || !self.qdot_min[i].is_finite()
                || !self.qdot_max[i].is_finite()
            {
                return Err(ControllerError::InvalidLimits(format!(
                    "joint {i}: need qdot_min < 0 < qdot_max, got [{}, {}]",
                    self.qdot_min[i], self.qdot_max[i]
                )));
            }
            if !(self.accel_max[i] > 0.0 && self.accel_max[i].is_finite()) {
                return Err(ControllerError::InvalidLimits(format!(
                    "joint {i}: accel_max must be positive, got {}",
                    self.accel_max[i]
                )));
            }
        }
        Ok(())
    }

    pub(crate) fn check_len(&self, n: usize) -> Result<(), ControllerError> {
        if n != self.dof() {
            return Err(ControllerError::DimensionMismatch {
                expected: self.dof(),
                found: n,
            });
        }
        Ok(())
    }

    /// True when `qdot` lies in the velocity box and within `accel_max·dt`
    /// of `qdot_prev`. Exact floating-point comparisons.
    pub fn admits(&self, qdot: &[f64], qdot_prev: &[f64], dt: f64) -> bool {
        (0..self.dof()).all(|i| {
            qdot[i] >= self.qdot_min[i]
                && qdot[i] <= self.qdot_max[i]
                && (qdot[i] - qdot_prev[i]).abs() <= self.accel_max[i] * dt
        })
    }
}

/// `q_current + q̇·dt`, clamped into the joint position limits.
pub fn integrate_command(spec: &ChainSpec, q_current: &JointState, qdot_star: &[f64], dt: f64) -> JointState {
    let mut q = JointState::new(
        q_current
            .as_slice()
            .iter()
            .zip(qdot_star)
            .map(|(q, v)| q + v * dt)
            .collect(),
    );
    spec.clamp(&mut q);
    q
}

/// Inputs to one control tick.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlTick {
    pub dt: f64,
    pub q_current: JointState,
    pub qdot_prev: Vec<f64>,
    /// New operator target, if one arrived this tick.
    pub target_pose: Option<Pose>,
    /// Last valid IK solution: warm-start seed, and the configuration held
    /// when there is no usable target.
    pub q_last_target: JointState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TickStatus {
    Ok,
    IkFailed,
    BoxFallback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickOutput {
    pub q_cmd: JointState,
    pub qdot_star: Vec<f64>,
    /// Configuration the tick steered toward.
    pub q_target: JointState,
    /// Wall-clock seconds spent in IK (zero when no IK ran).
    pub ik_delay: f64,
    pub status: TickStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlConfig {
    #[serde(default)]
    pub ik: IkConfig,
    #[serde(default)]
    pub qp: QpMethod,
}

/// One pass of the three-stage pipeline. Never fails on a bad target: an IK
/// failure keeps steering toward the last valid configuration.
pub fn control_tick(
    tick: &ControlTick,
    spec: &ChainSpec,
    limits: &SafetyLimits,
    cfg: &ControlConfig,
) -> Result<TickOutput, ControllerError> {
    let n = spec.dof();
    for len in [tick.q_current.len(), tick.qdot_prev.len(), tick.q_last_target.len()] {
        if len != n {
            return Err(ControllerError::DimensionMismatch {
                expected: n,
                found: len,
            });
        }
    }
    limits.check_len(n)?;
    if !(tick.dt > 0.0) {
        return Err(ControllerError::NonPositiveDt(tick.dt));
    }

    let mut status = TickStatus::Ok;
    let mut ik_delay = 0.0;
    let q_target = match &tick.target_pose {
        Some(target) => {
            if target.frame != Frame::RobotZup {
                return Err(GeometryError::FrameMismatch {
                    expected: Frame::RobotZup,
                    found: target.frame,
                }
                .into());
            }
            let started = Instant::now();
            let res = solve_ik(spec, &tick.q_last_target, target, &cfg.ik);
            ik_delay = started.elapsed().as_secs_f64();
            match res {
                Ok(sol) => sol.q,
                Err(KinematicsError::NoConvergence { .. }) | Err(KinematicsError::Singular) => {
                    status = TickStatus::IkFailed;
                    tick.q_last_target.clone()
                }
                Err(KinematicsError::LimitViolation { .. }) => {
                    // Seed outside limits: fall back to holding.
                    status = TickStatus::IkFailed;
                    tick.q_last_target.clone()
                }
                Err(e) => unreachable!("validated inputs: {e}"),
            }
        }
        None => tick.q_last_target.clone(),
    };

    let qdot_needed: Vec<f64> = q_target
        .as_slice()
        .iter()
        .zip(tick.q_current.as_slice())
        .map(|(t, c)| (t - c) / tick.dt)
        .collect();

    let qdot_star = match qp_safety_filter(&qdot_needed, limits, &tick.qdot_prev, tick.dt, cfg.qp) {
        Ok(v) => v,
        Err(ControllerError::InfeasibleBox { .. }) => {
            status = TickStatus::BoxFallback;
            solve_in_box(
                &qdot_needed,
                &acceleration_box(limits, &tick.qdot_prev, tick.dt),
                cfg.qp,
            )
        }
        Err(e) => return Err(e),
    };

    Ok(TickOutput {
        q_cmd: integrate_command(spec, &tick.q_current, &qdot_star, tick.dt),
        qdot_star,
        q_target,
        ik_delay,
        status,
    })
}
