//! The runnable system: network ingress, the control loop, telemetry
//! egress and the autopilot/replay drivers.

mod config;
mod schedule;
mod server;
mod session;
mod telemetry;

use std::time::{Duration, Instant};

use thiserror::Error;

pub use config::{
    default_port, shape_at_home, SessionConfig, SessionMode, DEFAULT_NOISE_CORRELATION, DEFAULT_PORT, PORT_ENV,
};
pub use schedule::{AutopilotSchedule, PositionNoise, ReplaySchedule, Scheduled, TargetSchedule};
pub use server::{Ingress, IngressStats, ServerContext, WsServer};
pub use session::{run_session, Session, SessionSummary, TickStats, TrialOutcome};
pub use telemetry::{Subscription, TelemetryBus, TelemetryFrame, DEFAULT_SUBSCRIBER_CAPACITY};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("config: {0}")]
    Config(String),
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error(transparent)]
    Dataset(#[from] crate::dataset::DatasetError),
    #[error(transparent)]
    Controller(#[from] crate::controller::ControllerError),
    #[error(transparent)]
    Kinematics(#[from] crate::kinematics::KinematicsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Monotonic session time in seconds, zero at `epoch + offset`.
#[derive(Debug, Clone, Copy)]
pub struct SessionClock {
    epoch: Instant,
    offset: f64,
}

impl SessionClock {
    /// A clock that reads `-offset` now.
    pub fn start(offset: f64) -> Self {
        Self {
            epoch: Instant::now(),
            offset,
        }
    }

    pub fn now(&self) -> f64 {
        self.epoch.elapsed().as_secs_f64() - self.offset
    }

    /// The wall instant at which the clock reads `t`.
    pub fn instant_at(&self, t: f64) -> Instant {
        self.epoch + Duration::from_secs_f64((t + self.offset).max(0.0))
    }
}
