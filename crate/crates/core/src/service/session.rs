use std::collections::hash_map::DefaultHasher;
use std::fmt::Write as _;
use std::hash::Hasher;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use serde::Serialize;

use super::schedule::{AutopilotSchedule, PositionNoise, ReplaySchedule, TargetSchedule};
use super::server::{Ingress, ServerContext, WsServer};
use super::telemetry::{TelemetryBus, TelemetryFrame};
use super::{ServiceError, SessionClock, SessionConfig, SessionMode};
use crate::capture::{fuse_cv_imu, FusionState, PoseSample, Source};
use crate::controller::{control_tick, plant_step, ControlTick, PlantState, SafetyLimits, TickStatus, DT_RANGE};
use crate::dataset::{load_trial, save_trial, TrialMeta, TrialRecord};
use crate::evaluation::{
    compute_itv, evaluate, nearest_rank, pair_streams, ItvResult, StampedSample, Trajectory, TrajectoryMetrics,
    DEFAULT_ITV_WAYPOINTS,
};
use crate::geometry::Pose;
use crate::kinematics::{forward_kinematics, ChainSpec, JointState};
use crate::wire::{BufferCounters, DropOldestBuffer};

/// Seconds, nearest-rank over measured real-time tick periods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TickStats {
    pub n: usize,
    pub mean: f64,
    pub p50: f64,
    pub p99: f64,
    pub max: f64,
}

impl TickStats {
    pub fn from_periods(periods: &[f64]) -> Option<Self> {
        if periods.is_empty() {
            return None;
        }
        let mut s = periods.to_vec();
        s.sort_by(f64::total_cmp);
        Some(Self {
            n: s.len(),
            mean: s.iter().sum::<f64>() / s.len() as f64,
            p50: nearest_rank(&s, 0.50),
            p99: nearest_rank(&s, 0.99),
            max: s[s.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub repetition: u32,
    /// `None` when no target was paired.
    pub metrics: Option<TrajectoryMetrics>,
    pub targets_consumed: usize,
    /// Median sender-to-receipt delay, where senders supplied comparable clocks.
    pub sender_latency_p50: Option<f64>,
    #[serde(skip)]
    pub samples: Vec<StampedSample>,
    /// Executed positions; on the schedule's time grid when there is one.
    #[serde(skip)]
    pub actual_trace: Trajectory,
    pub recorded: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionSummary {
    pub mode: SessionMode,
    pub fixed_step: bool,
    pub ticks: u64,
    pub trials: Vec<TrialOutcome>,
    /// Across the trials' executed traces, when there are at least two.
    pub itv: Option<ItvResult>,
    pub safety_violations: u64,
    pub ik_failures: u64,
    pub box_fallbacks: u64,
    pub drops: BufferCounters,
    pub malformed_messages: u64,
    pub stale_messages: u64,
    /// Real-time runs only.
    pub tick_period: Option<TickStats>,
    /// Hash of every commanded joint vector, in order.
    pub q_cmd_digest: String,
    pub final_q: JointState,
}

fn mm(x: f64) -> f64 {
    x * 1e3
}

impl SessionSummary {
    pub fn report(&self) -> String {
        let mut s = String::new();
        let clock = if self.fixed_step { "fixed-step" } else { "real-time" };
        let _ = writeln!(
            s,
            "mode {} ({clock}), {} trial(s), {} ticks",
            self.mode,
            self.trials.len(),
            self.ticks
        );
        for tr in &self.trials {
            match &tr.metrics {
                Some(m) => {
                    let _ = writeln!(
                        s,
                        "trial {}: ATE rmse {:.3} mm, p50 {:.3} mm, p95 {:.3} mm; latency p50 {:.3} ms, p95 {:.3} ms; {} pairs, {} unpaired",
                        tr.repetition,
                        mm(m.ate_rmse),
                        mm(m.ate_p50),
                        mm(m.ate_p95),
                        mm(m.latency_p50),
                        mm(m.latency_p95),
                        m.n_pairs,
                        m.n_dropped
                    );
                }
                None => {
                    let _ = writeln!(s, "trial {}: no targets paired", tr.repetition);
                }
            }
            if let Some(h) = tr.sender_latency_p50 {
                let _ = writeln!(s, "  sender latency p50 {:.3} ms", mm(h));
            }
            if let Some(p) = &tr.recorded {
                let _ = writeln!(s, "  recorded {}", p.display());
            }
        }
        if let Some(itv) = &self.itv {
            let _ = writeln!(s, "ITV {:.4} mm over {} trials", mm(itv.itv), itv.n_trials);
        }
        let _ = writeln!(
            s,
            "safety violations {}, IK failures {}, box fallbacks {}",
            self.safety_violations, self.ik_failures, self.box_fallbacks
        );
        let _ = writeln!(
            s,
            "ingress: {} received, {} evicted, {} stale, {} out-of-order, {} malformed",
            self.drops.pushed, self.drops.evicted, self.drops.stale, self.stale_messages, self.malformed_messages
        );
        if let Some(t) = &self.tick_period {
            let _ = writeln!(
                s,
                "tick period mean {:.3} ms, p50 {:.3} ms, p99 {:.3} ms, max {:.3} ms",
                mm(t.mean),
                mm(t.p50),
                mm(t.p99),
                mm(t.max)
            );
        }
        let _ = writeln!(s, "q_cmd digest {}", self.q_cmd_digest);
        s
    }
}

/// Where a trial's targets come from.
enum Feed {
    Network,
    Schedule(Box<dyn TargetSchedule>),
}

#[derive(Default)]
struct Totals {
    ticks: u64,
    violations: u64,
    ik_failures: u64,
    box_fallbacks: u64,
    drops: BufferCounters,
    periods: Vec<f64>,
    digest: DefaultHasher,
}

pub struct Session {
    cfg: SessionConfig,
    chain: ChainSpec,
    limits: SafetyLimits,
    replay: Option<TrialRecord>,
    clock: SessionClock,
    bus: TelemetryBus,
    ingress: Ingress,
    server: Option<WsServer>,
    stop: Arc<AtomicBool>,
}

/// Validates, loads and binds, then runs to completion.
pub fn run_session(cfg: SessionConfig) -> Result<SessionSummary, ServiceError> {
    Session::new(cfg)?.run()
}

impl Session {
    /// Everything that can fail before the loop starts fails here.
    pub fn new(cfg: SessionConfig) -> Result<Self, ServiceError> {
        cfg.validate()?;
        let chain = cfg.load_chain()?;
        let limits = cfg.load_limits(chain.dof())?;
        let replay = match (&cfg.mode, &cfg.dataset_path) {
            (SessionMode::Replay, Some(p)) => {
                let rec = load_trial(p)?;
                if rec.rows.is_empty() {
                    return Err(ServiceError::Config(format!("{} has no rows", p.display())));
                }
                Some(rec)
            }
            _ => None,
        };
        let clock = SessionClock::start(0.0);
        let bus = TelemetryBus::new();
        let ingress = Ingress::new(cfg.buffer_capacity);
        let server = match cfg.port {
            Some(port) => {
                let addr = format!("{}:{port}", cfg.bind);
                let ctx = ServerContext {
                    ingress: ingress.clone(),
                    bus: bus.clone(),
                    clock,
                    q_fix: cfg.q_fix,
                    decimation: cfg.telemetry_decimation,
                };
                Some(WsServer::bind(addr.as_str(), ctx).map_err(|source| ServiceError::Bind { addr, source })?)
            }
            None => None,
        };
        Ok(Self {
            cfg,
            chain,
            limits,
            replay,
            clock,
            bus,
            ingress,
            server,
            stop: Arc::new(AtomicBool::new(false)),
        })
    }

    pub fn local_addr(&self) -> Option<SocketAddr> {
        self.server.as_ref().map(WsServer::local_addr)
    }

    pub fn telemetry(&self) -> TelemetryBus {
        self.bus.clone()
    }

    /// Setting the flag ends the run after the current tick.
    pub fn stop_handle(&self) -> Arc<AtomicBool> {
        Arc::clone(&self.stop)
    }

    pub fn chain(&self) -> &ChainSpec {
        &self.chain
    }

    pub fn config(&self) -> &SessionConfig {
        &self.cfg
    }

    pub fn run(mut self) -> Result<SessionSummary, ServiceError> {
        let mut totals = Totals::default();
        let mut trials = Vec::new();
        let mut final_q = self.chain.home.clone();
        for rep in 0..self.cfg.repetitions {
            if self.stop.load(Ordering::SeqCst) {
                break;
            }
            let feed = self.feed(rep)?;
            let (outcome, q) = self.run_trial(rep, feed, &mut totals)?;
            final_q = q;
            trials.push(outcome);
        }
        let traces: Vec<Trajectory> = trials.iter().map(|t| t.actual_trace.clone()).collect();
        let itv = (traces.len() >= 2 && traces.iter().all(|t| t.len() >= 2))
            .then(|| compute_itv(&traces, DEFAULT_ITV_WAYPOINTS).ok())
            .flatten();
        let stats = &self.ingress.stats;
        let summary = SessionSummary {
            mode: self.cfg.mode,
            fixed_step: self.cfg.fixed_step,
            ticks: totals.ticks,
            trials,
            itv,
            safety_violations: totals.violations,
            ik_failures: totals.ik_failures,
            box_fallbacks: totals.box_fallbacks,
            drops: totals.drops,
            malformed_messages: stats.malformed.load(Ordering::Relaxed),
            stale_messages: stats.stale.load(Ordering::Relaxed),
            tick_period: TickStats::from_periods(&totals.periods),
            q_cmd_digest: format!("{:016x}", totals.digest.finish()),
            final_q,
        };
        if let Some(server) = self.server.take() {
            server.shutdown();
        }
        Ok(summary)
    }

    fn feed(&self, rep: u32) -> Result<Feed, ServiceError> {
        let cfg = &self.cfg;
        Ok(match cfg.mode {
            SessionMode::Live => Feed::Network,
            SessionMode::Autopilot => {
                let shape = cfg.shape.expect("validated");
                let noise = PositionNoise::correlated(
                    cfg.noise_sigma,
                    cfg.noise_correlation,
                    shape.sample_rate,
                    cfg.noise_seed.wrapping_add(u64::from(rep)),
                );
                let duration = cfg.duration.unwrap_or(shape.period);
                Feed::Schedule(Box::new(
                    AutopilotSchedule::new(shape, duration, cfg.lead_in, noise).with_approach(self.home_pose()?),
                ))
            }
            SessionMode::Replay => {
                let rec = self.replay.as_ref().expect("loaded in new");
                Feed::Schedule(Box::new(
                    ReplaySchedule::new(rec, cfg.lead_in)
                        .map_err(|e| ServiceError::Config(e.to_string()))?
                        .with_approach(self.home_pose()?),
                ))
            }
        })
    }

    fn home_pose(&self) -> Result<Pose, ServiceError> {
        Ok(forward_kinematics(&self.chain, &self.chain.home)?)
    }

    fn trial_meta(&self, rep: u32) -> TrialMeta {
        let cfg = &self.cfg;
        let (mode, shape, sample_rate) = match (cfg.mode, &self.replay) {
            (SessionMode::Replay, Some(rec)) => (Source::Autopilot, rec.meta.shape.clone(), rec.meta.sample_rate),
            (SessionMode::Autopilot, _) => {
                let s = cfg.shape.expect("validated");
                (Source::Autopilot, s.kind.name().to_string(), s.sample_rate)
            }
            _ => (
                cfg.source,
                cfg.shape.map_or("freeform".to_string(), |s| s.kind.name().to_string()),
                100.0,
            ),
        };
        TrialMeta {
            user_id: cfg.user_id.clone(),
            mode,
            shape,
            trial_index: cfg.trial_index + rep,
            sample_rate,
        }
    }

    fn run_trial(&self, rep: u32, feed: Feed, totals: &mut Totals) -> Result<(TrialOutcome, JointState), ServiceError> {
        let cfg = &self.cfg;
        let network = matches!(feed, Feed::Network);
        let clock = if network {
            self.clock
        } else {
            SessionClock::start(cfg.lead_in)
        };
        let t_begin = if network { clock.now() } else { -cfg.lead_in };
        let end_t = match &feed {
            Feed::Network => cfg.duration.map_or(f64::INFINITY, |d| t_begin + d),
            Feed::Schedule(s) => s.end_time() + cfg.pairing_window + 2.0 * cfg.dt,
        };
        let local_buf = Arc::new(DropOldestBuffer::new(cfg.buffer_capacity));
        let before = self.ingress_counters();

        let mut lp = Loop::new(self, clock, totals);
        let mut grid = Vec::new();
        if cfg.fixed_step {
            let Feed::Schedule(mut schedule) = feed else {
                unreachable!("validated: live mode is real-time")
            };
            let mut pending = schedule.next();
            let mut n: u64 = 0;
            loop {
                let t = n as f64 * cfg.dt + t_begin;
                if t > end_t || self.stop.load(Ordering::SeqCst) {
                    break;
                }
                while let Some(item) = pending.filter(|i| i.due <= t + 1e-9) {
                    local_buf.push(scheduled_sample(item.due, item.pose, item.seq));
                    if item.due >= 0.0 {
                        grid.push(item.due);
                    }
                    pending = schedule.next();
                }
                lp.step(t, cfg.dt, local_buf.take_latest(), local_buf.counters())?;
                n += 1;
            }
        } else {
            let trial_stop = Arc::new(AtomicBool::new(false));
            let producer = match feed {
                Feed::Schedule(schedule) => Some(spawn_producer(
                    schedule,
                    clock,
                    Arc::clone(&local_buf),
                    Arc::clone(&trial_stop),
                )?),
                Feed::Network => None,
            };
            let run = self.realtime_loop(&mut lp, t_begin, end_t, network, &local_buf);
            trial_stop.store(true, Ordering::SeqCst);
            if let Some(h) = producer {
                grid = h.join().expect("schedule producer panicked");
            }
            run?;
        }

        let drops = if network {
            diff(self.ingress_counters(), before)
        } else {
            local_buf.counters()
        };
        let (outcome_parts, q_final) = lp.finish();
        totals.drops = totals.drops.merged(drops);
        let outcome = self.score(rep, outcome_parts, &grid)?;
        Ok((outcome, q_final))
    }

    fn realtime_loop(
        &self,
        lp: &mut Loop<'_>,
        t_begin: f64,
        end_t: f64,
        network: bool,
        local_buf: &DropOldestBuffer<PoseSample>,
    ) -> Result<(), ServiceError> {
        let cfg = &self.cfg;
        let period = Duration::from_secs_f64(cfg.dt);
        let mut fusion: Option<FusionState> = None;
        // Scheduled targets land on multiples of the sample period; ticking
        // half a period later keeps each one clear of a consume/next-tick race.
        let mut next = if network {
            Instant::now()
        } else {
            lp.clock.instant_at(t_begin + 0.5 * cfg.dt)
        };
        let mut prev_t: Option<f64> = None;
        loop {
            if let Some(wait) = next.checked_duration_since(Instant::now()) {
                thread::sleep(wait);
            }
            let t = lp.clock.now();
            if t > end_t || self.stop.load(Ordering::SeqCst) {
                break;
            }
            let dt = match prev_t {
                Some(p) => {
                    lp.totals.periods.push(t - p);
                    (t - p).clamp(DT_RANGE.0, DT_RANGE.1)
                }
                None => cfg.dt,
            };
            prev_t = Some(t);
            let (target, counters) = if !network {
                (local_buf.take_latest(), local_buf.counters())
            } else if cfg.source == Source::CvImu {
                (self.fused_target(&mut fusion, dt)?, self.ingress_counters())
            } else {
                (self.ingress.poses.take_latest(), self.ingress_counters())
            };
            lp.step(t, dt, target, counters)?;
            next += period;
            let now = Instant::now();
            if now > next + period {
                // More than a full period behind: restart the cadence.
                next = now;
            }
        }
        Ok(())
    }

    fn fused_target(&self, fusion: &mut Option<FusionState>, dt: f64) -> Result<Option<PoseSample>, ServiceError> {
        let imu = self.ingress.imu.take_latest();
        let cv = self.ingress.cv.take_latest();
        if imu.is_none() && cv.is_none() {
            return Ok(None);
        }
        let state = match fusion {
            Some(s) => *s,
            None => {
                let home = self.home_pose()?;
                FusionState::new(home.position, home.orientation, self.cfg.fusion_alpha)
                    .map_err(|e| ServiceError::Config(e.to_string()))?
            }
        };
        let (next, mut sample) = fuse_cv_imu(&state, cv.map(|c| c.1), imu.map(|i| i.1), dt)
            .map_err(|e| ServiceError::Config(e.to_string()))?;
        *fusion = Some(next);
        // Stamp with the newest ingress time among the inputs used.
        sample.t = imu
            .map_or(f64::NEG_INFINITY, |i| i.0)
            .max(cv.map_or(f64::NEG_INFINITY, |c| c.0));
        Ok(Some(sample))
    }

    fn ingress_counters(&self) -> BufferCounters {
        let ig = &self.ingress;
        ig.poses.counters().merged(ig.imu.counters()).merged(ig.cv.counters())
    }

    fn score(&self, rep: u32, log: TrialLog, grid: &[f64]) -> Result<TrialOutcome, ServiceError> {
        let keep: Vec<usize> = (0..log.targets.len()).filter(|&i| log.targets[i].t >= 0.0).collect();
        let targets: Vec<PoseSample> = keep.iter().map(|&i| log.targets[i]).collect();
        let actuals: Vec<(f64, Pose)> = log.actuals.iter().copied().filter(|a| a.0 >= 0.0).collect();
        let pairing = pair_streams(&targets, &actuals, self.cfg.pairing_window);
        let mut samples = pairing.pairs.clone();
        for (s, &(ti, _)) in samples.iter_mut().zip(&pairing.matches) {
            let (ik_delay, latency) = log.consumed[keep[ti]];
            s.ik_delay = ik_delay;
            s.e2e_latency = latency;
        }
        let mut scored = pairing.clone();
        scored.pairs = samples.clone();
        let metrics = evaluate(&scored).ok();

        let mut hints: Vec<f64> = targets.iter().filter_map(|t| t.latency_hint).collect();
        hints.sort_by(f64::total_cmp);
        let sender_latency_p50 = (!hints.is_empty()).then(|| nearest_rank(&hints, 0.5));

        let actual_trace = if grid.is_empty() {
            actuals.iter().map(|(t, p)| (*t, p.position)).collect()
        } else {
            resample_positions(&actuals, grid)
        };

        let recorded = match &self.cfg.record {
            Some(root) if !samples.is_empty() => {
                let rec = TrialRecord::from_samples(self.trial_meta(rep), &samples);
                Some(save_trial(root, &rec)?)
            }
            _ => None,
        };
        Ok(TrialOutcome {
            repetition: rep,
            metrics,
            targets_consumed: targets.len(),
            sender_latency_p50,
            samples,
            actual_trace,
            recorded,
        })
    }
}

fn diff(a: BufferCounters, b: BufferCounters) -> BufferCounters {
    BufferCounters {
        pushed: a.pushed - b.pushed,
        evicted: a.evicted - b.evicted,
        stale: a.stale - b.stale,
    }
}

fn scheduled_sample(t: f64, pose: Pose, seq: u64) -> PoseSample {
    PoseSample {
        t,
        pose,
        source: Source::Autopilot,
        latency_hint: None,
        seq: Some(seq),
    }
}

/// Pushes each scheduled target at its due wall time, stamped on arrival.
/// Returns the non-negative due times.
fn spawn_producer(
    mut schedule: Box<dyn TargetSchedule>,
    clock: SessionClock,
    buf: Arc<DropOldestBuffer<PoseSample>>,
    stop: Arc<AtomicBool>,
) -> std::io::Result<thread::JoinHandle<Vec<f64>>> {
    thread::Builder::new().name("schedule".into()).spawn(move || {
        let mut grid = Vec::new();
        while let Some(item) = schedule.next() {
            if stop.load(Ordering::SeqCst) {
                break;
            }
            if let Some(wait) = clock.instant_at(item.due).checked_duration_since(Instant::now()) {
                thread::sleep(wait);
            }
            buf.push(scheduled_sample(clock.now(), item.pose, item.seq));
            if item.due >= 0.0 {
                grid.push(item.due);
            }
        }
        grid
    })
}

/// Linear interpolation of the executed positions at `grid` times, holding
/// the end values outside the recorded span.
fn resample_positions(actuals: &[(f64, Pose)], grid: &[f64]) -> Trajectory {
    if actuals.is_empty() {
        return Vec::new();
    }
    let mut j = 0;
    grid.iter()
        .map(|&t| {
            while j + 1 < actuals.len() && actuals[j + 1].0 <= t {
                j += 1;
            }
            let (ta, pa) = (actuals[j].0, actuals[j].1.position);
            let p = match actuals.get(j + 1) {
                Some(&(tb, b)) if t > ta && tb > ta => pa + (b.position - pa).scale((t - ta) / (tb - ta)),
                _ => pa,
            };
            (t, p)
        })
        .collect()
}

struct TrialLog {
    /// Consumed targets, stamped at ingress.
    targets: Vec<PoseSample>,
    /// `(ik_delay, ingress-to-command latency)` per consumed target.
    consumed: Vec<(f64, f64)>,
    actuals: Vec<(f64, Pose)>,
}

/// Mutable state of one trial's control loop. Sole owner of the plant.
struct Loop<'a> {
    session: &'a Session,
    clock: SessionClock,
    totals: &'a mut Totals,
    plant: PlantState,
    q_last_target: JointState,
    qdot_prev: Vec<f64>,
    last_target: Option<Pose>,
    log: TrialLog,
}

impl<'a> Loop<'a> {
    fn new(session: &'a Session, clock: SessionClock, totals: &'a mut Totals) -> Self {
        let home = session.chain.home.clone();
        Self {
            session,
            clock,
            totals,
            plant: PlantState::at_rest(home.clone()),
            q_last_target: home,
            qdot_prev: vec![0.0; session.chain.dof()],
            last_target: None,
            log: TrialLog {
                targets: Vec::new(),
                consumed: Vec::new(),
                actuals: Vec::new(),
            },
        }
    }

    /// One control period starting at session time `t`.
    fn step(&mut self, t: f64, dt: f64, target: Option<PoseSample>, drops: BufferCounters) -> Result<(), ServiceError> {
        let s = self.session;
        let tick = ControlTick {
            dt,
            q_current: self.plant.q.clone(),
            qdot_prev: self.qdot_prev.clone(),
            target_pose: target.map(|x| x.pose),
            q_last_target: self.q_last_target.clone(),
        };
        let out = control_tick(&tick, &s.chain, &s.limits, &s.cfg.control)?;
        let t_cmd = if s.cfg.fixed_step { t } else { self.clock.now() };

        let totals = &mut *self.totals;
        if !s.limits.admits(&out.qdot_star, &self.qdot_prev, dt) {
            totals.violations += 1;
        }
        match out.status {
            TickStatus::Ok => {}
            TickStatus::IkFailed => totals.ik_failures += 1,
            TickStatus::BoxFallback => totals.box_fallbacks += 1,
        }
        for v in out.q_cmd.as_slice() {
            totals.digest.write_u64(v.to_bits());
        }

        self.plant = plant_step(&self.plant, &out.q_cmd, dt, &s.limits);
        self.q_last_target = out.q_target;
        self.qdot_prev = out.qdot_star;
        let actual = forward_kinematics(&s.chain, &self.plant.q)?;
        // One nominal period ahead. The measured `dt` looks backward and
        // would let a late tick stamp past its successor.
        let t_actual = t + s.cfg.dt;
        self.log.actuals.push((t_actual, actual));

        let latency = target.map(|x| (t_cmd - x.t).max(0.0));
        if let (Some(x), Some(lat)) = (target, latency) {
            self.log.targets.push(x);
            self.log.consumed.push((out.ik_delay, lat));
            self.last_target = Some(x.pose);
        }

        if s.bus.has_subscribers() {
            s.bus.publish(TelemetryFrame {
                tick: totals.ticks,
                t: t_actual,
                target_pose: self.last_target,
                actual_pose: actual,
                q: self.plant.q.0.clone(),
                qdot: self.plant.qdot.clone(),
                error: self.last_target.and_then(|p| p.position_distance(&actual).ok()),
                e2e_latency: latency,
                consumed_seq: target.and_then(|x| x.seq),
                drops,
                status: out.status,
            });
        }
        totals.ticks += 1;
        Ok(())
    }

    fn finish(self) -> (TrialLog, JointState) {
        (self.log, self.plant.q)
    }
}
