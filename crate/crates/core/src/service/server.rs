//! WebSocket front end. One listener, routed by request path:
//!
//! | path         | direction | payload                                   |
//! |--------------|-----------|-------------------------------------------|
//! | `/pose`      | in        | ArPose JSON text messages                 |
//! | `/imu`       | in        | binary IMU frames (any chunking)          |
//! | `/cv`        | in        | vision position JSON text messages        |
//! | `/telemetry` | out       | telemetry JSON, `?decimation=N` (default from config) |

use std::io::{self, ErrorKind};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use tungstenite::handshake::server::{ErrorResponse, Request, Response};
use tungstenite::handshake::HandshakeError;
use tungstenite::{Message, WebSocket};

use super::telemetry::{TelemetryBus, DEFAULT_SUBSCRIBER_CAPACITY};
use super::SessionClock;
use crate::capture::{ArPoseAdapter, PoseSample};
use crate::geometry::{UnitQuaternion, Vec3};
use crate::wire::{ArPoseMsg, CvPositionMsg, DropOldestBuffer, ImuStreamDecoder};

const POLL: Duration = Duration::from_millis(50);

/// Ingress queues the control loop drains.
#[derive(Clone)]
pub struct Ingress {
    pub poses: Arc<DropOldestBuffer<PoseSample>>,
    /// `(receipt time, robot-frame orientation)`.
    pub imu: Arc<DropOldestBuffer<(f64, UnitQuaternion)>>,
    /// `(receipt time, robot-frame position)`.
    pub cv: Arc<DropOldestBuffer<(f64, Vec3)>>,
    pub stats: Arc<IngressStats>,
}

impl Ingress {
    pub fn new(capacity: usize) -> Self {
        Self {
            poses: Arc::new(DropOldestBuffer::new(capacity)),
            imu: Arc::new(DropOldestBuffer::new(capacity)),
            cv: Arc::new(DropOldestBuffer::new(capacity)),
            stats: Arc::default(),
        }
    }
}

#[derive(Debug, Default)]
pub struct IngressStats {
    pub malformed: AtomicU64,
    pub stale: AtomicU64,
    pub connections: AtomicU64,
}

#[derive(Clone)]
pub struct ServerContext {
    pub ingress: Ingress,
    pub bus: TelemetryBus,
    pub clock: SessionClock,
    pub q_fix: UnitQuaternion,
    pub decimation: u32,
}

pub struct WsServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl WsServer {
    /// Binds immediately so address errors surface before any loop starts.
    pub fn bind(addr: impl ToSocketAddrs, ctx: ServerContext) -> io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let handle = {
            let stop = Arc::clone(&stop);
            thread::Builder::new()
                .name("ws-accept".into())
                .spawn(move || accept_loop(listener, ctx, stop))?
        };
        Ok(Self {
            addr,
            stop,
            handle: Some(handle),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(mut self) {
        self.stop_and_join();
    }

    fn stop_and_join(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for WsServer {
    fn drop(&mut self) {
        self.stop_and_join();
    }
}

fn accept_loop(listener: TcpListener, ctx: ServerContext, stop: Arc<AtomicBool>) {
    let mut workers = Vec::new();
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                let (ctx, stop) = (ctx.clone(), Arc::clone(&stop));
                ctx.ingress.stats.connections.fetch_add(1, Ordering::Relaxed);
                if let Ok(h) = thread::Builder::new()
                    .name("ws-conn".into())
                    .spawn(move || serve_connection(stream, ctx, stop))
                {
                    workers.push(h);
                }
                workers.retain(|h: &JoinHandle<()>| !h.is_finished());
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(5)),
            Err(_) => thread::sleep(Duration::from_millis(5)),
        }
    }
    for h in workers {
        let _ = h.join();
    }
}

enum Route {
    Pose,
    Imu,
    Cv,
    Telemetry { decimation: u32 },
}

fn route(req: &Request, default_decimation: u32) -> Option<Route> {
    let uri = req.uri();
    match uri.path() {
        "/pose" => Some(Route::Pose),
        "/imu" => Some(Route::Imu),
        "/cv" => Some(Route::Cv),
        "/telemetry" => {
            let decimation = uri
                .query()
                .into_iter()
                .flat_map(|q| q.split('&'))
                .find_map(|kv| kv.strip_prefix("decimation="))
                .and_then(|v| v.parse().ok())
                .filter(|&d| d >= 1)
                .unwrap_or(default_decimation);
            Some(Route::Telemetry { decimation })
        }
        _ => None,
    }
}

fn handshake(stream: TcpStream, default_decimation: u32) -> Option<(WebSocket<TcpStream>, Route)> {
    let mut chosen = None;
    // The callback signature is fixed by tungstenite.
    #[allow(clippy::result_large_err)]
    let callback = |req: &Request, resp: Response| -> Result<Response, ErrorResponse> {
        match route(req, default_decimation) {
            Some(r) => {
                chosen = Some(r);
                Ok(resp)
            }
            None => {
                let mut err = ErrorResponse::new(Some(format!("unknown path {}", req.uri().path())));
                *err.status_mut() = tungstenite::http::StatusCode::NOT_FOUND;
                Err(err)
            }
        }
    };
    let mut attempt = tungstenite::accept_hdr(stream, callback);
    let ws = loop {
        match attempt {
            Ok(ws) => break ws,
            Err(HandshakeError::Interrupted(mid)) => attempt = mid.handshake(),
            Err(HandshakeError::Failure(_)) => return None,
        }
    };
    chosen.map(|r| (ws, r))
}

fn serve_connection(stream: TcpStream, ctx: ServerContext, stop: Arc<AtomicBool>) {
    let _ = stream.set_nonblocking(false);
    let _ = stream.set_nodelay(true);
    let _ = stream.set_read_timeout(Some(POLL));
    let Some((ws, route)) = handshake(stream, ctx.decimation) else {
        return;
    };
    match route {
        Route::Pose => pose_reader(ws, &ctx, &stop),
        Route::Imu => imu_reader(ws, &ctx, &stop),
        Route::Cv => cv_reader(ws, &ctx, &stop),
        Route::Telemetry { decimation } => telemetry_writer(ws, &ctx, &stop, decimation),
    }
}

/// Reads until close, error or shutdown, handing each data message to `on_msg`.
fn read_messages(ws: &mut WebSocket<TcpStream>, stop: &AtomicBool, mut on_msg: impl FnMut(Message)) {
    while !stop.load(Ordering::SeqCst) {
        match ws.read() {
            Ok(Message::Close(_)) => break,
            Ok(m @ (Message::Text(_) | Message::Binary(_))) => on_msg(m),
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(_) => break,
        }
    }
    let _ = ws.close(None);
    let _ = ws.flush();
}

fn pose_reader(mut ws: WebSocket<TcpStream>, ctx: &ServerContext, stop: &AtomicBool) {
    let mut adapter = ArPoseAdapter::new(ctx.q_fix);
    let stats = &ctx.ingress.stats;
    read_messages(&mut ws, stop, |m| {
        let now = ctx.clock.now();
        let parsed = match &m {
            Message::Text(t) => ArPoseMsg::parse(t.as_str()).ok(),
            _ => None,
        };
        let Some(msg) = parsed else {
            stats.malformed.fetch_add(1, Ordering::Relaxed);
            return;
        };
        let before = adapter.stale_drops();
        match adapter.accept(&msg, now) {
            Ok(Some(sample)) => {
                ctx.ingress.poses.push(sample);
            }
            Ok(None) => {
                stats.stale.fetch_add(adapter.stale_drops() - before, Ordering::Relaxed);
            }
            Err(_) => {
                stats.malformed.fetch_add(1, Ordering::Relaxed);
            }
        }
    });
}

fn imu_reader(mut ws: WebSocket<TcpStream>, ctx: &ServerContext, stop: &AtomicBool) {
    let mut decoder = ImuStreamDecoder::new();
    let stats = &ctx.ingress.stats;
    read_messages(&mut ws, stop, |m| {
        let Message::Binary(bytes) = m else {
            stats.malformed.fetch_add(1, Ordering::Relaxed);
            return;
        };
        let now = ctx.clock.now();
        for packet in decoder.push(&bytes) {
            match packet.orientation() {
                Ok(q) => {
                    ctx.ingress.imu.push((now, ctx.q_fix.multiply(q)));
                }
                Err(_) => {
                    stats.malformed.fetch_add(1, Ordering::Relaxed);
                }
            }
        }
    });
}

fn cv_reader(mut ws: WebSocket<TcpStream>, ctx: &ServerContext, stop: &AtomicBool) {
    let stats = &ctx.ingress.stats;
    let mut last_seq = None;
    read_messages(&mut ws, stop, |m| {
        let now = ctx.clock.now();
        let parsed = match &m {
            Message::Text(t) => CvPositionMsg::parse(t.as_str()).ok(),
            _ => None,
        };
        match parsed {
            Some(msg) if last_seq.is_some_and(|s| msg.seq <= s) => {
                stats.stale.fetch_add(1, Ordering::Relaxed);
            }
            Some(msg) => {
                last_seq = Some(msg.seq);
                ctx.ingress.cv.push((now, ctx.q_fix.rotate(msg.pos)));
            }
            None => {
                stats.malformed.fetch_add(1, Ordering::Relaxed);
            }
        }
    });
}

fn telemetry_writer(mut ws: WebSocket<TcpStream>, ctx: &ServerContext, stop: &AtomicBool, decimation: u32) {
    let sub = ctx.bus.subscribe(DEFAULT_SUBSCRIBER_CAPACITY);
    let decimation = u64::from(decimation.max(1));
    while !stop.load(Ordering::SeqCst) {
        match sub.recv_timeout(POLL) {
            Ok(Some(frame)) => {
                if frame.tick % decimation != 0 {
                    continue;
                }
                let json = serde_json::to_string(&*frame).expect("telemetry serializes");
                if ws.send(Message::text(json)).is_err() {
                    return;
                }
            }
            Ok(None) => {
                // Idle: notice a client that went away.
                match ws.read() {
                    Ok(Message::Close(_)) => break,
                    Err(tungstenite::Error::Io(e))
                        if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
                    Err(_) => return,
                    Ok(_) => {}
                }
            }
            Err(()) => break,
        }
    }
    let _ = ws.close(None);
    let _ = ws.flush();
}
