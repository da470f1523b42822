use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ServiceError;
use crate::capture::{ShapeKind, ShapeSpec, Source, DEFAULT_FUSION_ALPHA};
use crate::controller::{ControlConfig, SafetyLimits, DEFAULT_DT, DT_RANGE};
use crate::evaluation::DEFAULT_PAIRING_WINDOW;
use crate::geometry::{default_q_fix, Plane, UnitQuaternion};
use crate::kinematics::{forward_kinematics, ChainSpec};
use crate::wire::DEFAULT_CAPACITY;

/// Port used when neither the config nor the environment names one.
pub const DEFAULT_PORT: u16 = 8765;
/// Correlation time of injected target noise, seconds.
pub const DEFAULT_NOISE_CORRELATION: f64 = 0.25;
/// Environment variable overriding [`DEFAULT_PORT`].
pub const PORT_ENV: &str = "PROXYARM_PORT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionMode {
    /// Targets arrive over the network.
    #[default]
    Live,
    Autopilot,
    Replay,
}

impl std::fmt::Display for SessionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SessionMode::Live => "live",
            SessionMode::Autopilot => "autopilot",
            SessionMode::Replay => "replay",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub mode: SessionMode,
    /// Live input: `ARPOSE` or `CV_IMU`.
    pub source: Source,
    pub shape: Option<ShapeSpec>,
    pub dataset_path: Option<PathBuf>,
    pub chain_path: Option<PathBuf>,
    pub limits_path: Option<PathBuf>,
    pub bind: String,
    /// `None` runs without a listener; `Some(0)` picks a free port.
    pub port: Option<u16>,
    pub fixed_step: bool,
    /// Dataset root to record trials under.
    pub record: Option<PathBuf>,
    /// Seconds of shape tracing per repetition, or the live session length.
    /// Defaults to one shape period; live sessions run until stopped.
    pub duration: Option<f64>,
    pub repetitions: u32,
    pub dt: f64,
    pub control: ControlConfig,
    pub q_fix: UnitQuaternion,
    /// Every n-th tick goes to telemetry subscribers unless they ask otherwise.
    pub telemetry_decimation: u32,
    pub buffer_capacity: usize,
    pub pairing_window: f64,
    /// Seconds spent moving onto the first target before t = 0.
    pub lead_in: f64,
    /// Gaussian jitter added to autopilot targets, meters.
    pub noise_sigma: f64,
    /// Seconds; zero gives independent per-sample draws.
    pub noise_correlation: f64,
    /// Repetition `k` uses seed `noise_seed + k`.
    pub noise_seed: u64,
    pub fusion_alpha: f64,
    pub user_id: String,
    pub trial_index: u32,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            mode: SessionMode::Live,
            source: Source::Arpose,
            shape: None,
            dataset_path: None,
            chain_path: None,
            limits_path: None,
            bind: "127.0.0.1".into(),
            port: None,
            fixed_step: false,
            record: None,
            duration: None,
            repetitions: 1,
            dt: DEFAULT_DT,
            control: ControlConfig::default(),
            q_fix: default_q_fix(),
            telemetry_decimation: 2,
            buffer_capacity: DEFAULT_CAPACITY,
            pairing_window: DEFAULT_PAIRING_WINDOW,
            lead_in: 1.0,
            noise_sigma: 0.0,
            noise_correlation: DEFAULT_NOISE_CORRELATION,
            noise_seed: 0,
            fusion_alpha: DEFAULT_FUSION_ALPHA,
            user_id: "sim".into(),
            trial_index: 0,
        }
    }
}

fn bad(msg: impl Into<String>) -> ServiceError {
    ServiceError::Config(msg.into())
}

impl SessionConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, ServiceError> {
        toml::from_str(s).map_err(|e| bad(e.to_string()))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ServiceError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| bad(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        match self.mode {
            SessionMode::Autopilot => {
                let shape = self.shape.as_ref().ok_or_else(|| bad("autopilot mode needs a shape"))?;
                shape.validate().map_err(|e| bad(e.to_string()))?;
            }
            SessionMode::Replay => {
                if self.dataset_path.is_none() {
                    return Err(bad("replay mode needs a dataset path"));
                }
            }
            SessionMode::Live => {
                if self.fixed_step {
                    return Err(bad("live mode cannot run on the virtual clock"));
                }
                if self.port.is_none() {
                    return Err(bad("live mode needs a port"));
                }
                if self.source == Source::Autopilot {
                    return Err(bad("live source must be ARPOSE or CV_IMU"));
                }
                if self.repetitions != 1 {
                    return Err(bad("live mode runs a single repetition"));
                }
            }
        }
        if !(self.dt >= DT_RANGE.0 && self.dt <= DT_RANGE.1) {
            return Err(bad(format!("dt {} outside [{}, {}]", self.dt, DT_RANGE.0, DT_RANGE.1)));
        }
        if self.repetitions == 0 {
            return Err(bad("repetitions must be at least 1"));
        }
        if let Some(d) = self.duration {
            if !(d > 0.0 && d.is_finite()) {
                return Err(bad(format!("duration {d} must be positive")));
            }
        }
        let checks = [
            ("lead_in", self.lead_in, self.lead_in >= 0.0),
            ("pairing_window", self.pairing_window, self.pairing_window > 0.0),
            ("noise_sigma", self.noise_sigma, self.noise_sigma >= 0.0),
            (
                "noise_correlation",
                self.noise_correlation,
                self.noise_correlation >= 0.0,
            ),
            (
                "fusion_alpha",
                self.fusion_alpha,
                (0.0..=1.0).contains(&self.fusion_alpha),
            ),
        ];
        for (name, v, ok) in checks {
            if !(ok && v.is_finite()) {
                return Err(bad(format!("{name} = {v} is out of range")));
            }
        }
        if self.telemetry_decimation == 0 || self.buffer_capacity == 0 {
            return Err(bad("telemetry_decimation and buffer_capacity must be at least 1"));
        }
        Ok(())
    }

    pub fn load_chain(&self) -> Result<ChainSpec, ServiceError> {
        match &self.chain_path {
            Some(p) => ChainSpec::from_file(p).map_err(|e| bad(e.to_string())),
            None => Ok(ChainSpec::default_6r()),
        }
    }

    pub fn load_limits(&self, dof: usize) -> Result<SafetyLimits, ServiceError> {
        let limits = match &self.limits_path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| bad(format!("{}: {e}", p.display())))?;
                toml::from_str::<SafetyLimits>(&text).map_err(|e| bad(format!("{}: {e}", p.display())))?
            }
            None => SafetyLimits::default_for(dof),
        };
        limits.validate().map_err(|e| bad(e.to_string()))?;
        if limits.dof() != dof {
            return Err(bad(format!("limits cover {} joints, chain has {dof}", limits.dof())));
        }
        Ok(limits)
    }
}

/// Shape centred on the chain's home end-effector pose, holding its orientation.
pub fn shape_at_home(chain: &ChainSpec, kind: ShapeKind, plane: Plane, period: f64) -> Result<ShapeSpec, ServiceError> {
    let home = forward_kinematics(chain, &chain.home).map_err(|e| bad(e.to_string()))?;
    ShapeSpec::new(kind, home.position, plane, period)
        .map(|s| s.with_orientation(home.orientation))
        .map_err(|e| bad(e.to_string()))
}

/// Port from [`PORT_ENV`], falling back to [`DEFAULT_PORT`].
pub fn default_port() -> u16 {
    std::env::var(PORT_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(DEFAULT_PORT)
}
