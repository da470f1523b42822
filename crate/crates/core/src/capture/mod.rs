//! Pose sources: the ArPose stream adapter, CV+IMU fusion and the autopilot.

mod autopilot;
mod fusion;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{homogenize, GeometryError, Pose, UnitQuaternion};
use crate::wire::ArPoseMsg;

pub use autopilot::{autopilot_pose, ShapeError, ShapeKind, ShapeSpec, DEFAULT_SAMPLE_RATE};
pub use fusion::{fuse_cv_imu, FusionState, DEFAULT_FUSION_ALPHA};

/// Sender-to-receipt gaps beyond this are treated as incomparable clocks.
pub const MAX_PLAUSIBLE_LATENCY: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Source {
    Arpose,
    CvImu,
    Autopilot,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Arpose => "ARPOSE",
            Source::CvImu => "CV_IMU",
            Source::Autopilot => "AUTOPILOT",
        }
    }
}

impl std::fmt::Display for Source {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Source {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "ARPOSE" => Ok(Source::Arpose),
            "CV_IMU" => Ok(Source::CvImu),
            "AUTOPILOT" => Ok(Source::Autopilot),
            other => Err(format!("unknown source `{other}`")),
        }
    }
}

/// A target pose as seen by the receiver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseSample {
    /// Receiver monotonic clock, seconds.
    pub t: f64,
    pub pose: Pose,
    pub source: Source,
    /// Sender-to-receipt delay, when the sender clock is comparable.
    pub latency_hint: Option<f64>,
    /// Sender sequence number, when the source has one.
    pub seq: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum CaptureError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("fusion step needs a CV position or an IMU orientation")]
    NoFusionInput,
    #[error("time step must be positive and finite, got {0}")]
    BadDt(f64),
    #[error("fusion alpha must lie in [0, 1], got {0}")]
    BadAlpha(f64),
}

/// Homogenizes one ArPose message into a robot-frame sample stamped `clock`.
///
/// `latency_hint` is `clock − t_ms` when that lands in `[0, 10 s]`; anything
/// else means the two clocks do not share an epoch.
pub fn arpose_to_sample(msg: &ArPoseMsg, q_fix: UnitQuaternion, clock: f64) -> Result<PoseSample, CaptureError> {
    let pose = homogenize(&msg.pose(), q_fix)?;
    let gap = clock - msg.t_ms as f64 * 1e-3;
    let latency_hint = (0.0..=MAX_PLAUSIBLE_LATENCY).contains(&gap).then_some(gap);
    Ok(PoseSample {
        t: clock,
        pose,
        source: Source::Arpose,
        latency_hint,
        seq: Some(msg.seq),
    })
}

/// Per-connection ArPose ingest: drops messages whose `seq` does not
/// advance and keeps emitted timestamps strictly increasing.
#[derive(Debug, Clone)]
pub struct ArPoseAdapter {
    q_fix: UnitQuaternion,
    last_seq: Option<u64>,
    last_t: f64,
    stale: u64,
}

impl ArPoseAdapter {
    pub fn new(q_fix: UnitQuaternion) -> Self {
        Self {
            q_fix,
            last_seq: None,
            last_t: f64::NEG_INFINITY,
            stale: 0,
        }
    }

    /// Out-of-order or duplicate messages produced so far.
    pub fn stale_drops(&self) -> u64 {
        self.stale
    }

    pub fn accept(&mut self, msg: &ArPoseMsg, clock: f64) -> Result<Option<PoseSample>, CaptureError> {
        if self.last_seq.is_some_and(|s| msg.seq <= s) {
            self.stale += 1;
            return Ok(None);
        }
        let mut sample = arpose_to_sample(msg, self.q_fix, clock)?;
        if sample.t <= self.last_t {
            sample.t = self.last_t.next_up();
        }
        self.last_seq = Some(msg.seq);
        self.last_t = sample.t;
        Ok(Some(sample))
    }
}
