//! Timed target generators for autopilot and replay runs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::capture::ShapeSpec;
use crate::dataset::TrialRecord;
use crate::geometry::{Pose, Vec3};

/// Fraction of the lead-in spent moving; the rest holds the first target.
pub const APPROACH_FRACTION: f64 = 0.6;

/// Lead-in target at `due < 0`: a smoothstep blend from `from` onto `to`
/// over the first part of the lead-in, then `to`.
fn approach(from: Option<Pose>, to: Pose, due: f64, lead_in: f64) -> Pose {
    let Some(from) = from else { return to };
    let u = if lead_in > 0.0 {
        ((due + lead_in) / (APPROACH_FRACTION * lead_in)).clamp(0.0, 1.0)
    } else {
        1.0
    };
    if u >= 1.0 {
        return to;
    }
    let w = u * u * (3.0 - 2.0 * u);
    Pose::robot(
        from.position + (to.position - from.position).scale(w),
        from.orientation.slerp(to.orientation, w),
    )
}

/// A target due at session time `due` seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scheduled {
    pub due: f64,
    pub pose: Pose,
    pub seq: u64,
}

pub trait TargetSchedule: Send {
    fn next(&mut self) -> Option<Scheduled>;
    /// Due time of the final target.
    fn end_time(&self) -> f64;
}

/// Isotropic Gaussian position noise with marginal standard deviation
/// `sigma`, reproducible from `seed`.
///
/// With a positive correlation time the noise is white noise through two
/// cascaded first-order lags, scaled back to `sigma` and started in its
/// stationary state: a slow wander rather than per-sample jitter.
pub struct PositionNoise {
    normal: Normal<f64>,
    rng: ChaCha8Rng,
    rho: f64,
    gain: f64,
    stage: [Vec3; 2],
}

impl PositionNoise {
    /// Independent draws per sample.
    pub fn new(sigma: f64, seed: u64) -> Option<Self> {
        Self::correlated(sigma, 0.0, 1.0, seed)
    }

    /// Noise sampled at `rate` Hz with correlation time `tau` seconds.
    pub fn correlated(sigma: f64, tau: f64, rate: f64, seed: u64) -> Option<Self> {
        if !(sigma > 0.0) {
            return None;
        }
        let rho = if tau > 0.0 { (-1.0 / (tau * rate)).exp() } else { 0.0 };
        let r2 = rho * rho;
        // Stationary variance of the cascade is gain²·(1 + ρ²)/(1 − ρ²)³.
        let gain = ((1.0 - r2).powi(3) / (1.0 + r2)).sqrt();
        let mut n = Self {
            normal: Normal::new(0.0, sigma).expect("positive sigma"),
            rng: ChaCha8Rng::seed_from_u64(seed),
            rho,
            gain,
            stage: [Vec3::ZERO; 2],
        };
        if rho > 0.0 {
            let burn_in = (20.0 * tau * rate).ceil() as usize;
            for _ in 0..burn_in {
                n.sample();
            }
        }
        Some(n)
    }

    pub fn sample(&mut self) -> Vec3 {
        let e = Vec3::new(
            self.normal.sample(&mut self.rng),
            self.normal.sample(&mut self.rng),
            self.normal.sample(&mut self.rng),
        );
        if self.rho == 0.0 {
            return e;
        }
        self.stage[0] = self.stage[0].scale(self.rho) + e.scale(self.gain);
        self.stage[1] = self.stage[1].scale(self.rho) + self.stage[0];
        self.stage[1]
    }
}

/// Shape samples at the shape's rate for `[0, duration)`, preceded by
/// `lead_in` seconds holding the starting pose.
pub struct AutopilotSchedule {
    shape: ShapeSpec,
    k: i64,
    end: i64,
    noise: Option<PositionNoise>,
    lead_in: f64,
    from: Option<Pose>,
    seq: u64,
}

impl AutopilotSchedule {
    pub fn new(shape: ShapeSpec, duration: f64, lead_in: f64, noise: Option<PositionNoise>) -> Self {
        let lead = (lead_in * shape.sample_rate - 1e-9).ceil().max(0.0) as i64;
        Self {
            end: shape.sample_count(duration) as i64,
            shape,
            k: -lead,
            noise,
            lead_in,
            from: None,
            seq: 0,
        }
    }

    /// Starts the lead-in at `from` instead of at the first target.
    pub fn with_approach(mut self, from: Pose) -> Self {
        self.from = Some(from);
        self
    }
}

impl TargetSchedule for AutopilotSchedule {
    fn next(&mut self) -> Option<Scheduled> {
        if self.k >= self.end {
            return None;
        }
        let due = self.k as f64 / self.shape.sample_rate;
        let mut position = self.shape.position_at(due.max(0.0));
        let pose = if self.k >= 0 {
            if let Some(n) = self.noise.as_mut() {
                position += n.sample();
            }
            Pose::robot(position, self.shape.orientation)
        } else {
            approach(
                self.from,
                Pose::robot(position, self.shape.orientation),
                due,
                self.lead_in,
            )
        };
        self.k += 1;
        self.seq += 1;
        Some(Scheduled {
            due,
            pose,
            seq: self.seq - 1,
        })
    }

    fn end_time(&self) -> f64 {
        (self.end - 1).max(0) as f64 / self.shape.sample_rate
    }
}

/// Recorded targets at their recorded offsets from the first row, after a
/// lead-in holding the first target.
pub struct ReplaySchedule {
    items: Vec<(f64, Pose)>,
    idx: usize,
    lead: Vec<f64>,
    lead_idx: usize,
    lead_in: f64,
    from: Option<Pose>,
    seq: u64,
}

impl ReplaySchedule {
    pub fn new(rec: &TrialRecord, lead_in: f64) -> Result<Self, crate::geometry::GeometryError> {
        let t0 = rec.rows.first().map_or(0.0, |r| r.t_target_ms);
        let items = rec
            .rows
            .iter()
            .map(|r| Ok(((r.t_target_ms - t0) * 1e-3, r.target_pose()?)))
            .collect::<Result<Vec<_>, _>>()?;
        // Lead-in at the recording's mean cadence.
        let step = if items.len() >= 2 {
            items[items.len() - 1].0 / (items.len() - 1) as f64
        } else {
            0.01
        };
        let n_lead = if items.is_empty() || step <= 0.0 {
            0
        } else {
            (lead_in / step - 1e-9).ceil().max(0.0) as usize
        };
        let lead = (1..=n_lead).rev().map(|k| -(k as f64) * step).collect();
        Ok(Self {
            items,
            idx: 0,
            lead,
            lead_idx: 0,
            lead_in,
            from: None,
            seq: 0,
        })
    }

    /// Starts the lead-in at `from` instead of at the first target.
    pub fn with_approach(mut self, from: Pose) -> Self {
        self.from = Some(from);
        self
    }
}

impl TargetSchedule for ReplaySchedule {
    fn next(&mut self) -> Option<Scheduled> {
        let (due, pose) = if self.lead_idx < self.lead.len() {
            self.lead_idx += 1;
            let due = self.lead[self.lead_idx - 1];
            (due, approach(self.from, self.items[0].1, due, self.lead_in))
        } else if self.idx < self.items.len() {
            self.idx += 1;
            self.items[self.idx - 1]
        } else {
            return None;
        };
        self.seq += 1;
        Some(Scheduled {
            due,
            pose,
            seq: self.seq - 1,
        })
    }

    fn end_time(&self) -> f64 {
        self.items.last().map_or(0.0, |i| i.0)
    }
}
