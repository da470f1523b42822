use std::sync::{Arc, Mutex, Weak};
use std::time::Duration;

use crossbeam::channel::{self, Receiver, RecvTimeoutError, Sender, TrySendError};
use serde::{Deserialize, Serialize};

use crate::controller::TickStatus;
use crate::geometry::Pose;
use crate::wire::BufferCounters;

/// Per-subscriber queue depth.
pub const DEFAULT_SUBSCRIBER_CAPACITY: usize = 64;

/// Loop state published once per control tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryFrame {
    pub tick: u64,
    /// Session clock, seconds.
    pub t: f64,
    /// Most recent operator target, if any has arrived.
    pub target_pose: Option<Pose>,
    /// Forward kinematics of the plant after this tick.
    pub actual_pose: Pose,
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
    /// Target-to-actual position distance, meters.
    pub error: Option<f64>,
    /// Ingress-to-command seconds for a target consumed this tick.
    pub e2e_latency: Option<f64>,
    pub consumed_seq: Option<u64>,
    pub drops: BufferCounters,
    pub status: TickStatus,
}

struct Slot {
    tx: Sender<Arc<TelemetryFrame>>,
    // Publisher-side handle used to evict the oldest frame when full.
    rx: Receiver<Arc<TelemetryFrame>>,
    alive: Weak<()>,
}

/// Fan-out of telemetry frames. Publishing never blocks: a subscriber that
/// falls behind loses its oldest queued frames.
#[derive(Clone, Default)]
pub struct TelemetryBus {
    slots: Arc<Mutex<Vec<Slot>>>,
}

pub struct Subscription {
    rx: Receiver<Arc<TelemetryFrame>>,
    _alive: Arc<()>,
}

impl Subscription {
    pub fn recv(&self) -> Option<Arc<TelemetryFrame>> {
        self.rx.recv().ok()
    }

    /// `Ok(None)` on timeout, `Err(())` once the bus is gone.
    #[allow(clippy::result_unit_err)]
    pub fn recv_timeout(&self, timeout: Duration) -> Result<Option<Arc<TelemetryFrame>>, ()> {
        match self.rx.recv_timeout(timeout) {
            Ok(f) => Ok(Some(f)),
            Err(RecvTimeoutError::Timeout) => Ok(None),
            Err(RecvTimeoutError::Disconnected) => Err(()),
        }
    }

    pub fn try_iter(&self) -> impl Iterator<Item = Arc<TelemetryFrame>> + '_ {
        self.rx.try_iter()
    }
}

impl TelemetryBus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn subscribe(&self, capacity: usize) -> Subscription {
        let (tx, rx) = channel::bounded(capacity.max(1));
        let alive = Arc::new(());
        self.slots.lock().expect("telemetry lock").push(Slot {
            tx,
            rx: rx.clone(),
            alive: Arc::downgrade(&alive),
        });
        Subscription { rx, _alive: alive }
    }

    pub fn subscriber_count(&self) -> usize {
        let mut slots = self.slots.lock().expect("telemetry lock");
        slots.retain(|s| s.alive.strong_count() > 0);
        slots.len()
    }

    pub fn has_subscribers(&self) -> bool {
        self.subscriber_count() > 0
    }

    pub fn publish(&self, frame: TelemetryFrame) {
        let frame = Arc::new(frame);
        let mut slots = self.slots.lock().expect("telemetry lock");
        slots.retain(|s| {
            if s.alive.strong_count() == 0 {
                return false;
            }
            let mut item = Arc::clone(&frame);
            loop {
                match s.tx.try_send(item) {
                    Ok(()) => return true,
                    Err(TrySendError::Full(back)) => {
                        let _ = s.rx.try_recv();
                        item = back;
                    }
                    Err(TrySendError::Disconnected(_)) => return false,
                }
            }
        });
    }
}
