//! Offline metrics: approximate-time pairing, trajectory error, latency
//! percentiles, inter-trial variability and spatial error bins.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::capture::PoseSample;
use crate::geometry::{GeometryError, Plane, Pose, Vec3};

/// One target period at 100 Hz.
pub const DEFAULT_PAIRING_WINDOW: f64 = 0.010;
pub const DEFAULT_ITV_WAYPOINTS: usize = 200;
pub const DEFAULT_CELL_SIZE: f64 = 0.005;

pub const LOW_BAND_LIMIT: f64 = 0.0075;
pub const MID_BAND_LIMIT: f64 = 0.0175;
pub const HIGH_BAND_LIMIT: f64 = 0.020;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("no samples to evaluate")]
    Empty,
    #[error("need at least 2 trials, got {0}")]
    InsufficientTrials(usize),
    #[error("trial {trial} needs at least 2 samples spanning positive time")]
    ShortTrial { trial: usize },
    #[error("need at least 2 waypoints, got {0}")]
    TooFewWaypoints(usize),
    #[error("cell size must be positive and finite")]
    BadCellSize,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// A target pose paired with the executed pose closest to it in time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StampedSample {
    /// Seconds.
    pub t_target: f64,
    pub t_actual: f64,
    pub target_pose: Pose,
    pub actual_pose: Pose,
    pub ik_delay: f64,
    pub e2e_latency: f64,
    /// `|t_target − t_actual|`.
    pub sync_delta: f64,
}

impl StampedSample {
    pub fn position_error(&self) -> Result<f64, GeometryError> {
        self.target_pose.position_distance(&self.actual_pose)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pairing {
    /// Sorted by `t_target`.
    pub pairs: Vec<StampedSample>,
    /// `(target index, actual index)` per pair, aligned with `pairs`.
    pub matches: Vec<(usize, usize)>,
    pub unmatched_targets: usize,
    pub unmatched_actuals: usize,
}

/// Greedy nearest-timestamp matching. Candidate pairs within `window` are
/// taken in order of increasing `|Δt|`, each sample used at most once.
///
/// `e2e_latency` is the target's `latency_hint` (if any) plus the forward gap
/// to the actual sample; `ik_delay` is left at zero for the caller to fill.
pub fn pair_streams(targets: &[PoseSample], actuals: &[(f64, Pose)], window: f64) -> Pairing {
    let mut candidates = Vec::new();
    let mut lo = 0;
    for (i, tgt) in targets.iter().enumerate() {
        while lo < actuals.len() && actuals[lo].0 < tgt.t - window {
            lo += 1;
        }
        for (j, act) in actuals.iter().enumerate().skip(lo) {
            let dt = (act.0 - tgt.t).abs();
            if act.0 > tgt.t + window {
                break;
            }
            if dt <= window {
                candidates.push((dt, i, j));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut t_used = vec![false; targets.len()];
    let mut a_used = vec![false; actuals.len()];
    let mut matches = Vec::new();
    for (_, i, j) in candidates {
        if !t_used[i] && !a_used[j] {
            t_used[i] = true;
            a_used[j] = true;
            matches.push((i, j));
        }
    }
    matches.sort_unstable();
    let pairs = matches
        .iter()
        .map(|&(i, j)| {
            let (tgt, (t_act, act)) = (&targets[i], &actuals[j]);
            StampedSample {
                t_target: tgt.t,
                t_actual: *t_act,
                target_pose: tgt.pose,
                actual_pose: *act,
                ik_delay: 0.0,
                e2e_latency: (t_act - tgt.t).max(0.0) + tgt.latency_hint.unwrap_or(0.0),
                sync_delta: (t_act - tgt.t).abs(),
            }
        })
        .collect();
    Pairing {
        pairs,
        unmatched_targets: targets.len() - matches.len(),
        unmatched_actuals: actuals.len() - matches.len(),
        matches,
    }
}

/// The `k`-th smallest value with `k = ceil(p·n)`, clamped to `[1, n]`.
/// `sorted` must be ascending and nonempty.
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sequence");
    let n = sorted.len();
    // The epsilon absorbs products like 0.95 · 100 landing a hair above 95.
    let k = ((p * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    sorted[k - 1]
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMetrics {
    /// Meters.
    pub ate_rmse: f64,
    pub ate_p50: f64,
    pub ate_p95: f64,
    /// Seconds.
    pub latency_p50: f64,
    pub latency_p95: f64,
    pub n_pairs: usize,
    /// Targets that found no executed sample within the window.
    pub n_dropped: usize,
}

/// Position-only trajectory error and latency percentiles over paired samples.
pub fn compute_ate(pairs: &[StampedSample]) -> Result<TrajectoryMetrics, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::Empty);
    }
    let errors = pairs
        .iter()
        .map(StampedSample::position_error)
        .collect::<Result<Vec<_>, _>>()?;
    let n = errors.len() as f64;
    // Scaled by the largest error so a constant sequence comes back exact.
    let peak = errors.iter().copied().fold(0.0, f64::max);
    let rmse = if peak > 0.0 {
        peak * (errors.iter().map(|e| (e / peak).powi(2)).sum::<f64>() / n).sqrt()
    } else {
        0.0
    };
    let errors = sorted(errors);
    let latencies = sorted(pairs.iter().map(|p| p.e2e_latency).collect());
    Ok(TrajectoryMetrics {
        ate_rmse: rmse,
        ate_p50: nearest_rank(&errors, 0.50),
        ate_p95: nearest_rank(&errors, 0.95),
        latency_p50: nearest_rank(&latencies, 0.50),
        latency_p95: nearest_rank(&latencies, 0.95),
        n_pairs: pairs.len(),
        n_dropped: 0,
    })
}

/// Pairs and scores in one step, carrying the drop count through.
pub fn evaluate(pairing: &Pairing) -> Result<TrajectoryMetrics, EvalError> {
    let mut m = compute_ate(&pairing.pairs)?;
    m.n_dropped = pairing.unmatched_targets;
    Ok(m)
}

/// Plot-ready empirical CDF: `(value, fraction ≤ value)` per sorted sample.
pub fn cdf_points(values: &[f64]) -> Vec<(f64, f64)> {
    let v = sorted(values.to_vec());
    let n = v.len() as f64;
    v.into_iter()
        .enumerate()
        .map(|(i, x)| (x, (i + 1) as f64 / n))
        .collect()
}

/// A timed position trace.
pub type Trajectory = Vec<(f64, Vec3)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItvResult {
    /// Meters, one per waypoint.
    pub per_waypoint_sigma: Vec<f64>,
    pub itv: f64,
    pub n_trials: usize,
}

/// Linear resampling of `trial` at normalized times `k / (m − 1)`.
fn resample(trial: &[(f64, Vec3)], m: usize) -> Vec<Vec3> {
    let (t0, t1) = (trial[0].0, trial[trial.len() - 1].0);
    let mut j = 0;
    (0..m)
        .map(|k| {
            let tau = t0 + (t1 - t0) * k as f64 / (m - 1) as f64;
            while j + 2 < trial.len() && trial[j + 1].0 <= tau {
                j += 1;
            }
            let (ta, pa) = trial[j];
            let (tb, pb) = trial[j + 1];
            if tb <= ta {
                return pb;
            }
            let w = ((tau - ta) / (tb - ta)).clamp(0.0, 1.0);
            if w == 0.0 {
                pa
            } else if w == 1.0 {
                pb
            } else {
                pa + (pb - pa).scale(w)
            }
        })
        .collect()
}

/// Mean over `m` normalized-time waypoints of the RMS distance of the trials
/// from their centroid.
pub fn compute_itv(trials: &[Trajectory], m: usize) -> Result<ItvResult, EvalError> {
    if trials.len() < 2 {
        return Err(EvalError::InsufficientTrials(trials.len()));
    }
    if m < 2 {
        return Err(EvalError::TooFewWaypoints(m));
    }
    for (i, t) in trials.iter().enumerate() {
        let ok = t.len() >= 2 && t[t.len() - 1].0 > t[0].0 && t.iter().all(|(ti, p)| ti.is_finite() && p.is_finite());
        if !ok {
            return Err(EvalError::ShortTrial { trial: i });
        }
    }
    let resampled: Vec<Vec<Vec3>> = trials.iter().map(|t| resample(t, m)).collect();
    let n = trials.len() as f64;
    let sigmas: Vec<f64> = (0..m)
        .map(|k| {
            // Centroid taken relative to the first trial so identical trials
            // give exactly zero.
            let base = resampled[0][k];
            let mean_off = resampled
                .iter()
                .fold(Vec3::ZERO, |acc, r| acc + (r[k] - base))
                .scale(1.0 / n);
            let var = resampled
                .iter()
                .map(|r| {
                    let d = (r[k] - base) - mean_off;
                    d.dot(d)
                })
                .sum::<f64>()
                / n;
            var.sqrt()
        })
        .collect();
    Ok(ItvResult {
        itv: sigmas.iter().sum::<f64>() / m as f64,
        per_waypoint_sigma: sigmas,
        n_trials: trials.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorBand {
    /// Below 7.5 mm.
    Low,
    /// 7.5 mm up to 17.5 mm.
    Mid,
    /// 17.5 mm up to and including 20 mm.
    High,
    /// Above 20 mm.
    Saturated,
}

impl ErrorBand {
    pub fn classify(error: f64) -> Self {
        if error < LOW_BAND_LIMIT {
            ErrorBand::Low
        } else if error < MID_BAND_LIMIT {
            ErrorBand::Mid
        } else if error <= HIGH_BAND_LIMIT {
            ErrorBand::High
        } else {
            ErrorBand::Saturated
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBin {
    /// Grid index `(floor(u / cell), floor(v / cell))` in the trace plane.
    pub cell: (i64, i64),
    /// In-plane coordinates of the cell center, meters.
    pub center: (f64, f64),
    pub mean_error: f64,
    pub count: usize,
    pub band: ErrorBand,
}

/// Mean position error per grid cell, binned by target position projected
/// onto `plane`. Cells come out in index order.
pub fn bin_spatial_errors(pairs: &[StampedSample], plane: Plane, cell_size: f64) -> Result<Vec<ErrorBin>, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::Empty);
    }
    if !(cell_size > 0.0 && cell_size.is_finite()) {
        return Err(EvalError::BadCellSize);
    }
    let mut acc: BTreeMap<(i64, i64), (f64, usize)> = BTreeMap::new();
    for p in pairs {
        let e = p.position_error()?;
        let (u, v) = plane.project(p.target_pose.position);
        let cell = ((u / cell_size).floor() as i64, (v / cell_size).floor() as i64);
        let slot = acc.entry(cell).or_default();
        slot.0 += e;
        slot.1 += 1;
    }
    Ok(acc
        .into_iter()
        .map(|(cell, (sum, count))| {
            let mean_error = sum / count as f64;
            ErrorBin {
                cell,
                center: ((cell.0 as f64 + 0.5) * cell_size, (cell.1 as f64 + 0.5) * cell_size),
                mean_error,
                count,
                band: ErrorBand::classify(mean_error),
            }
        })
        .collect())
}
