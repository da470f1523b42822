//! Per-tick velocity safety filter.
//!
//! Acceleration limits tighten the velocity box around the previous command,
//! which keeps the problem separable: the optimum is the per-joint clamp of
//! the requested velocity. A generic projected-gradient box-QP solver is kept
//! alongside the closed form and the two must agree.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{ControllerError, SafetyLimits};

/// Which solver computes the filtered velocity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpMethod {
    #[default]
    ClosedForm,
    Iterative,
}

/// Closed interval of admissible joint velocities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityBounds {
    pub lower: f64,
    pub upper: f64,
}

impl VelocityBounds {
    pub fn contains(&self, v: f64) -> bool {
        v >= self.lower && v <= self.upper
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lower, self.upper)
    }
}

// `prev ± reach` rounded inward so that `|bound - prev| <= reach` holds
// exactly in floating point.
fn accel_interval(prev: f64, reach: f64) -> (f64, f64) {
    let mut hi = prev + reach;
    while hi - prev > reach {
        hi = hi.next_down();
    }
    let mut lo = prev - reach;
    while prev - lo > reach {
        lo = lo.next_up();
    }
    (lo, hi)
}

/// The box reachable under acceleration limits alone.
pub fn acceleration_box(limits: &SafetyLimits, qdot_prev: &[f64], dt: f64) -> Vec<VelocityBounds> {
    qdot_prev
        .iter()
        .zip(&limits.accel_max)
        .map(|(&prev, &a)| {
            let (lower, upper) = accel_interval(prev, a * dt);
            VelocityBounds { lower, upper }
        })
        .collect()
}

/// Intersection of the velocity box with the acceleration box around
/// `qdot_prev`. Empty intersections are reported with the offending joint.
pub fn feasible_box(limits: &SafetyLimits, qdot_prev: &[f64], dt: f64) -> Result<Vec<VelocityBounds>, ControllerError> {
    limits.check_len(qdot_prev.len())?;
    if !(dt > 0.0) {
        return Err(ControllerError::NonPositiveDt(dt));
    }
    acceleration_box(limits, qdot_prev, dt)
        .into_iter()
        .enumerate()
        .map(|(i, acc)| {
            let lower = acc.lower.max(limits.qdot_min[i]);
            let upper = acc.upper.min(limits.qdot_max[i]);
            if lower > upper {
                Err(ControllerError::InfeasibleBox { joint: i })
            } else {
                Ok(VelocityBounds { lower, upper })
            }
        })
        .collect()
}

/// Minimizes `‖q̇ − q̇_needed‖²` over the feasible velocity box.
pub fn qp_safety_filter(
    qdot_needed: &[f64],
    limits: &SafetyLimits,
    qdot_prev: &[f64],
    dt: f64,
    method: QpMethod,
) -> Result<Vec<f64>, ControllerError> {
    limits.check_len(qdot_needed.len())?;
    let bounds = feasible_box(limits, qdot_prev, dt)?;
    Ok(solve_in_box(qdot_needed, &bounds, method))
}

/// Solves the filter objective over an explicit box.
pub fn solve_in_box(qdot_needed: &[f64], bounds: &[VelocityBounds], method: QpMethod) -> Vec<f64> {
    match method {
        QpMethod::ClosedForm => qdot_needed.iter().zip(bounds).map(|(&v, b)| b.clamp(v)).collect(),
        QpMethod::Iterative => {
            let n = qdot_needed.len();
            // ‖v − n‖² = vᵀ(2I)v/2 − 2nᵀv + const
            let qp = BoxQp {
                hessian: DMatrix::identity(n, n) * 2.0,
                linear: DVector::from_iterator(n, qdot_needed.iter().map(|v| -2.0 * v)),
                lower: DVector::from_iterator(n, bounds.iter().map(|b| b.lower)),
                upper: DVector::from_iterator(n, bounds.iter().map(|b| b.upper)),
            };
            let sol = qp.solve(&PgdOptions::default());
            // Projection already lands inside the box; clamp again so no
            // rounding in the final update can leave it.
            sol.x.iter().zip(bounds).map(|(&v, b)| b.clamp(v)).collect()
        }
    }
}

/// `min ½ xᵀHx + gᵀx` subject to `lower ≤ x ≤ upper`, H symmetric PSD.
#[derive(Debug, Clone)]
pub struct BoxQp {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct PgdOptions {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for PgdOptions {
    fn default() -> Self {
        Self {
            max_iters: 100,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BoxQpSolution {
    pub x: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl BoxQp {
    fn project(&self, x: &mut DVector<f64>) {
        for i in 0..x.len() {
            x[i] = x[i].clamp(self.lower[i], self.upper[i]);
        }
    }

    /// Projected gradient descent with step `1/L`, L the Gershgorin bound on
    /// the largest Hessian eigenvalue. Starts from the projected origin.
    pub fn solve(&self, opts: &PgdOptions) -> BoxQpSolution {
        let n = self.linear.len();
        let lipschitz = (0..n)
            .map(|i| self.hessian.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        let step = 1.0 / lipschitz;
        let mut x = DVector::zeros(n);
        self.project(&mut x);
        for it in 1..=opts.max_iters {
            let grad = &self.hessian * &x + &self.linear;
            let mut next = &x - grad * step;
            self.project(&mut next);
            let delta = (&next - &x).amax();
            x = next;
            if delta <= opts.tol {
                return BoxQpSolution {
                    x,
                    iterations: it,
                    converged: true,
                };
            }
        }
        BoxQpSolution {
            x,
            iterations: opts.max_iters,
            converged: false,
        }
    }
}
