use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use proxyarm::dataset::{discover_trials, load_trial, read_rows, TrialRow};
use proxyarm::evaluation::{compute_ate, compute_itv, ItvResult, Trajectory, TrajectoryMetrics};
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct TrialReport {
    pub path: PathBuf,
    pub metrics: TrajectoryMetrics,
}

#[derive(Debug, Serialize)]
pub struct ItvGroup {
    pub group: String,
    pub trials: usize,
    pub itv: f64,
    pub per_waypoint_sigma: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct EvalReport {
    pub trials: Vec<TrialReport>,
    pub itv: Vec<ItvGroup>,
}

/// Rows of a trial. Files outside the `<user>/<mode>/<shape>` layout are
/// read without metadata.
fn rows(path: &Path) -> Result<Vec<TrialRow>> {
    match load_trial(path) {
        Ok(rec) => Ok(rec.rows),
        Err(proxyarm::dataset::DatasetError::Metadata(_)) => {
            let f = std::fs::File::open(path)?;
            Ok(read_rows(std::io::BufReader::new(f))?)
        }
        Err(e) => Err(e.into()),
    }
}

pub fn evaluate_path(input: &Path, grouped: bool, waypoints: usize) -> Result<EvalReport> {
    if !input.exists() {
        bail!("--input {} does not exist", input.display());
    }
    let paths = if input.is_file() {
        vec![input.to_path_buf()]
    } else {
        discover_trials(input)?
    };
    if paths.is_empty() {
        bail!("no trial_<n>.csv files under {}", input.display());
    }

    let mut trials = Vec::new();
    let mut groups: BTreeMap<String, Vec<Trajectory>> = BTreeMap::new();
    for path in paths {
        let rows = rows(&path).with_context(|| format!("reading {}", path.display()))?;
        let samples = rows
            .iter()
            .map(|r| r.to_sample())
            .collect::<Result<Vec<_>, _>>()
            .with_context(|| format!("{}: bad quaternion", path.display()))?;
        let metrics = compute_ate(&samples).with_context(|| format!("metrics for {}", path.display()))?;
        let key = if grouped {
            path.parent()
                .and_then(|p| p.strip_prefix(input).ok())
                .map(|p| p.display().to_string())
                .unwrap_or_default()
        } else {
            String::new()
        };
        let key = if key.is_empty() { "all".to_string() } else { key };
        groups
            .entry(key)
            .or_default()
            .push(samples.iter().map(|s| (s.t_actual, s.actual_pose.position)).collect());
        trials.push(TrialReport { path, metrics });
    }

    let mut itv = Vec::new();
    for (group, traces) in groups {
        if traces.len() < 2 {
            continue;
        }
        let ItvResult {
            per_waypoint_sigma,
            itv: value,
            n_trials,
        } = compute_itv(&traces, waypoints).with_context(|| format!("ITV for group {group}"))?;
        itv.push(ItvGroup {
            group,
            trials: n_trials,
            itv: value,
            per_waypoint_sigma,
        });
    }
    Ok(EvalReport { trials, itv })
}

fn mm(x: f64) -> f64 {
    x * 1e3
}

impl EvalReport {
    pub fn text(&self) -> String {
        let mut s = String::new();
        for t in &self.trials {
            let m = &t.metrics;
            let _ = writeln!(
                s,
                "{}: ATE rmse {:.3} mm, p50 {:.3} mm, p95 {:.3} mm; latency p50 {:.3} ms, p95 {:.3} ms; {} pairs",
                t.path.display(),
                mm(m.ate_rmse),
                mm(m.ate_p50),
                mm(m.ate_p95),
                mm(m.latency_p50),
                mm(m.latency_p95),
                m.n_pairs
            );
        }
        if self.itv.is_empty() {
            let _ = writeln!(s, "itv: needs at least 2 trials in a group");
        }
        for g in &self.itv {
            let _ = writeln!(s, "itv [{}] {:.3} mm over {} trials", g.group, mm(g.itv), g.trials);
            let _ = writeln!(s, "waypoint  phase  sigma_mm");
            let m = g.per_waypoint_sigma.len();
            for (j, sigma) in g.per_waypoint_sigma.iter().enumerate() {
                let phase = if m > 1 { j as f64 / (m - 1) as f64 } else { 0.0 };
                let _ = writeln!(s, "{j:>8}  {phase:.3}  {:.4}", mm(*sigma));
            }
        }
        s
    }
}
