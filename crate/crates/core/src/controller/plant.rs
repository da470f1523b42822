use serde::{Deserialize, Serialize};

use super::SafetyLimits;
use crate::kinematics::JointState;

/// Simulated arm behind the position interface: rate-limited first-order
/// tracking of the last command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub q: JointState,
    pub qdot: Vec<f64>,
    pub last_cmd: JointState,
}

impl PlantState {
    pub fn at_rest(q: JointState) -> Self {
        let n = q.len();
        Self {
            last_cmd: q.clone(),
            q,
            qdot: vec![0.0; n],
        }
    }
}

/// Moves each joint toward `q_cmd` by at most `qdot_max·dt` (or `|qdot_min|·dt`
/// downward). Pure and deterministic.
pub fn plant_step(state: &PlantState, q_cmd: &JointState, dt: f64, limits: &SafetyLimits) -> PlantState {
    assert!(dt > 0.0, "plant dt must be positive");
    let n = state.q.len();
    let mut q = Vec::with_capacity(n);
    let mut qdot = Vec::with_capacity(n);
    for i in 0..n {
        let cur = state.q.0[i];
        let step = (q_cmd.0[i] - cur).clamp(limits.qdot_min[i] * dt, limits.qdot_max[i] * dt);
        q.push(cur + step);
        qdot.push((step / dt).clamp(limits.qdot_min[i], limits.qdot_max[i]));
    }
    PlantState {
        q: JointState::new(q),
        qdot,
        last_cmd: q_cmd.clone(),
    }
}
