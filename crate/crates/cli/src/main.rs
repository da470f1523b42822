mod eval;
mod protocol;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::Ordering;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use proxyarm::capture::{ShapeKind, Source};
use proxyarm::geometry::Plane;
use proxyarm::service::{default_port, shape_at_home, Session, SessionConfig, SessionMode, PORT_ENV};

#[derive(Debug, Parser)]
#[command(
    name = "proxyarm",
    version,
    about = "Simulated teleoperation: capture, safe control, record/replay, evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Drive source, loop and plant from a virtual clock (bit-reproducible runs).
    #[arg(long, global = true)]
    fixed_step: bool,

    /// Write each trial as CSV under DIR (<user>/<mode>/<shape>/trial_<n>.csv).
    #[arg(long, global = true, value_name = "DIR")]
    record: Option<PathBuf>,

    /// WebSocket port. `serve` falls back to $PROXYARM_PORT, then 8765.
    #[arg(long, global = true)]
    port: Option<u16>,

    /// Session config (TOML). Command-line flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Also write the report as JSON to FILE.
    #[arg(long, global = true, value_name = "FILE")]
    json_out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Live session: accept poses over WebSocket until interrupted.
    Serve {
        /// Stop after this many seconds.
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long, value_enum)]
        source: Option<SourceArg>,
        /// Listen address.
        #[arg(long)]
        bind: Option<String>,
    },
    /// Trace a geometric shape centred on the home pose.
    Autopilot {
        #[arg(long, value_enum)]
        shape: ShapeArg,
        /// Meters: radius (circle), side (square), WIDTHxHEIGHT (rectangle), lobe diameter (s).
        #[arg(long)]
        size: String,
        /// Seconds per traversal.
        #[arg(long, default_value_t = 10.0)]
        period: f64,
        #[arg(long, value_enum, default_value_t = PlaneArg::Yz)]
        plane: PlaneArg,
        #[arg(long)]
        repetitions: Option<u32>,
        /// Gaussian position noise on the targets, millimeters.
        #[arg(long)]
        noise_mm: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Re-execute a recorded trial.
    Replay {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 1)]
        times: u32,
    },
    /// Trajectory metrics over recorded trials (a CSV file or a directory).
    Eval {
        #[arg(long)]
        input: PathBuf,
        /// Compute ITV per <user>/<mode>/<shape> directory instead of over all trials.
        #[arg(long)]
        itv_group: bool,
        /// Resampling waypoints for ITV.
        #[arg(long, default_value_t = proxyarm::evaluation::DEFAULT_ITV_WAYPOINTS)]
        waypoints: usize,
    },
    /// Decode one 22-byte IMU frame given as hex.
    ProtocolCheck {
        #[arg(long)]
        hex: String,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ShapeArg {
    Circle,
    Square,
    Rectangle,
    S,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PlaneArg {
    Xy,
    Xz,
    Yz,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SourceArg {
    Arpose,
    CvImu,
}

impl From<PlaneArg> for Plane {
    fn from(p: PlaneArg) -> Self {
        match p {
            PlaneArg::Xy => Plane::Xy,
            PlaneArg::Xz => Plane::Xz,
            PlaneArg::Yz => Plane::Yz,
        }
    }
}

fn parse_size(shape: ShapeArg, size: &str) -> Result<ShapeKind> {
    let num = |s: &str| -> Result<f64> {
        s.trim()
            .parse::<f64>()
            .with_context(|| format!("--size `{size}` is not a number of meters"))
    };
    Ok(match shape {
        ShapeArg::Circle => ShapeKind::Circle { radius: num(size)? },
        ShapeArg::Square => ShapeKind::Square { side: num(size)? },
        ShapeArg::S => ShapeKind::SShape { size: num(size)? },
        ShapeArg::Rectangle => {
            let Some((w, h)) = size.split_once(['x', 'X']) else {
                bail!("--size for a rectangle is WIDTHxHEIGHT in meters, e.g. 0.2x0.1");
            };
            ShapeKind::Rectangle {
                width: num(w)?,
                height: num(h)?,
            }
        }
    })
}

fn base_config(cli: &Cli) -> Result<SessionConfig> {
    let mut cfg = match &cli.config {
        Some(p) => SessionConfig::from_file(p).with_context(|| format!("loading config {}", p.display()))?,
        None => SessionConfig::default(),
    };
    cfg.fixed_step |= cli.fixed_step;
    if cli.record.is_some() {
        cfg.record = cli.record.clone();
    }
    if cli.port.is_some() {
        cfg.port = cli.port;
    }
    Ok(cfg)
}

fn session_config(cli: &Cli) -> Result<SessionConfig> {
    let mut cfg = base_config(cli)?;
    match &cli.command {
        Command::Serve { duration, source, bind } => {
            cfg.mode = SessionMode::Live;
            if cfg.port.is_none() {
                cfg.port = Some(default_port());
            }
            if let Some(d) = duration {
                cfg.duration = Some(*d);
            }
            if let Some(s) = source {
                cfg.source = match s {
                    SourceArg::Arpose => Source::Arpose,
                    SourceArg::CvImu => Source::CvImu,
                };
            }
            if let Some(b) = bind {
                cfg.bind = b.clone();
            }
        }
        Command::Autopilot {
            shape,
            size,
            period,
            plane,
            repetitions,
            noise_mm,
            seed,
        } => {
            cfg.mode = SessionMode::Autopilot;
            let chain = cfg.load_chain()?;
            cfg.shape = Some(shape_at_home(
                &chain,
                parse_size(*shape, size)?,
                (*plane).into(),
                *period,
            )?);
            if let Some(r) = repetitions {
                cfg.repetitions = *r;
            }
            if let Some(n) = noise_mm {
                cfg.noise_sigma = n / 1e3;
            }
            if let Some(s) = seed {
                cfg.noise_seed = *s;
            }
        }
        Command::Replay { input, times } => {
            if !input.is_file() {
                bail!("--input {} is not a file; pass one trial_<n>.csv", input.display());
            }
            cfg.mode = SessionMode::Replay;
            cfg.dataset_path = Some(input.clone());
            cfg.repetitions = *times;
        }
        Command::Eval { .. } | Command::ProtocolCheck { .. } => unreachable!("not a session command"),
    }
    Ok(cfg)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn run_session_command(cli: &Cli) -> Result<()> {
    let cfg = session_config(cli)?;
    let session = Session::new(cfg)?;
    if let Some(addr) = session.local_addr() {
        eprintln!("listening on ws://{addr} (paths /pose /imu /cv /telemetry)");
    }
    let stop = session.stop_handle();
    ctrlc::set_handler(move || stop.store(true, Ordering::SeqCst)).context("installing the interrupt handler")?;
    let summary = session.run()?;
    print!("{}", summary.report());
    if let Some(p) = &cli.json_out {
        write_json(p, &summary)?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Eval {
            input,
            itv_group,
            waypoints,
        } => {
            let report = eval::evaluate_path(input, *itv_group, *waypoints)?;
            print!("{}", report.text());
            if let Some(p) = &cli.json_out {
                write_json(p, &report)?;
            }
            Ok(())
        }
        Command::ProtocolCheck { hex } => {
            let report = protocol::check(hex);
            print!("{}", report.text());
            if let Some(p) = &cli.json_out {
                write_json(p, &report)?;
            }
            match report.error {
                Some(e) => bail!("frame rejected: {e}"),
                None => Ok(()),
            }
        }
        _ => run_session_command(cli),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if matches!(cli.command, Command::Serve { .. }) && format!("{e}").contains("cannot listen") {
                eprintln!("hint: pass --port or set {PORT_ENV} to use a free port");
            }
            ExitCode::FAILURE
        }
    }
}
