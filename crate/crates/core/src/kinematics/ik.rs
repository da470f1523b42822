use nalgebra::{DVector, Matrix6};
use serde::{Deserialize, Serialize};

use super::{jacobian_unchecked, ChainSpec, Jacobian, JointState, KinematicsError, TaskError};
use crate::geometry::{Frame, Pose};

/// Per-iteration cap on `|Δq|∞`, in radians.
pub const STEP_CAP: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IkConfig {
    pub lambda: f64,
    pub max_iters: usize,
    /// meters
    pub pos_tol: f64,
    /// radians
    pub rot_tol: f64,
    /// Task-error norm at and above which the full `lambda` applies. Below
    /// it damping shrinks proportionally to the error, down to
    /// `lambda * MIN_DAMPING_FRACTION`. `None` keeps `lambda` fixed.
    pub damping_reference: Option<f64>,
}

/// Floor of the error-scaled damping, as a fraction of `lambda`.
pub const MIN_DAMPING_FRACTION: f64 = 0.02;

impl Default for IkConfig {
    fn default() -> Self {
        Self {
            lambda: 0.05,
            max_iters: 100,
            pos_tol: 1e-4,
            rot_tol: 1e-3,
            damping_reference: Some(0.05),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IkSolution {
    pub q: JointState,
    pub iterations: usize,
    pub position_residual: f64,
    pub rotation_residual: f64,
}

/// Damped least-squares update `Jᵀ (J Jᵀ + λ² I)⁻¹ e`, computed with a
/// linear solve rather than an explicit inverse.
pub fn dls_step(j: &Jacobian, e: &TaskError, lambda: f64) -> Result<DVector<f64>, KinematicsError> {
    assert!(lambda >= 0.0, "damping must be non-negative");
    let jm = j.matrix();
    let mut a: Matrix6<f64> = Matrix6::zeros();
    a.copy_from(&(jm * jm.transpose()));
    for i in 0..6 {
        a[(i, i)] += lambda * lambda;
    }
    let y = if lambda > 0.0 {
        a.cholesky().ok_or(KinematicsError::Singular)?.solve(&e.0)
    } else {
        let lu = a.full_piv_lu();
        // Rank test relative to the largest pivot.
        let pivots = lu.u().diagonal().abs();
        if pivots.min() <= pivots.max() * 1e-12 {
            return Err(KinematicsError::Singular);
        }
        lu.solve(&e.0).ok_or(KinematicsError::Singular)?
    };
    Ok(jm.transpose() * DVector::from_column_slice(y.as_slice()))
}

/// Newton–Raphson IK with damped least-squares steps, starting at `seed`.
///
/// Iterates stay inside the joint limits (clamped after every step) and each
/// step is capped at [`STEP_CAP`] in the infinity norm. Failure reports the
/// best iterate seen.
pub fn solve_ik(
    spec: &ChainSpec,
    seed: &JointState,
    target: &Pose,
    cfg: &IkConfig,
) -> Result<IkSolution, KinematicsError> {
    target.expect_frame(Frame::RobotZup)?;
    spec.check_limits(seed)?;

    let mut q = seed.clone();
    let mut best: Option<(f64, IkSolution)> = None;

    for iter in 0..=cfg.max_iters {
        let (jac, ee) = jacobian_unchecked(spec, &q);
        let e = TaskError::between(&ee, target)?;
        let (pos_res, rot_res) = (e.position_norm(), e.rotation_norm());
        if pos_res <= cfg.pos_tol && rot_res <= cfg.rot_tol {
            return Ok(IkSolution {
                q,
                iterations: iter,
                position_residual: pos_res,
                rotation_residual: rot_res,
            });
        }
        let score = pos_res / cfg.pos_tol + rot_res / cfg.rot_tol;
        if best.as_ref().is_none_or(|(s, _)| score < *s) {
            best = Some((
                score,
                IkSolution {
                    q: q.clone(),
                    iterations: iter,
                    position_residual: pos_res,
                    rotation_residual: rot_res,
                },
            ));
        }
        if iter == cfg.max_iters {
            break;
        }

        let lambda = match cfg.damping_reference {
            Some(r) if r > 0.0 => cfg.lambda * (e.0.norm() / r).clamp(MIN_DAMPING_FRACTION, 1.0),
            _ => cfg.lambda,
        };
        let mut dq = dls_step(&jac, &e, lambda)?;
        let peak = dq.amax();
        if peak > STEP_CAP {
            dq *= STEP_CAP / peak;
        }
        for (v, d) in q.0.iter_mut().zip(dq.iter()) {
            *v += d;
        }
        spec.clamp(&mut q);
    }

    let (_, b) = best.expect("at least one iterate is scored");
    Err(KinematicsError::NoConvergence {
        best: b.q,
        position_residual: b.position_residual,
        rotation_residual: b.rotation_residual,
        iterations: cfg.max_iters,
    })
}
