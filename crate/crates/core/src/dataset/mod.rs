//! Trial logs: one CSV per trial at `<user>/<mode>/<shape>/trial_<n>.csv`
//! with a `trial_<n>.json` metadata sidecar.
//!
//! Quaternions are `(x, y, z, w)` on disk and `(w, x, y, z)` everywhere
//! else; the conversion lives in [`TrialRow`] only.

mod gfmt;

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::capture::{PoseSample, Source};
use crate::evaluation::StampedSample;
use crate::geometry::{GeometryError, Pose, UnitQuaternion, Vec3};

pub use gfmt::format_g9;

pub const HEADER: [&str; 20] = [
    "frame_idx",
    "t_target_ms",
    "t_actual_ms",
    "tgt_px",
    "tgt_py",
    "tgt_pz",
    "tgt_qx",
    "tgt_qy",
    "tgt_qz",
    "tgt_qw",
    "act_px",
    "act_py",
    "act_pz",
    "act_qx",
    "act_qy",
    "act_qz",
    "act_qw",
    "ik_delay_ms",
    "e2e_latency_ms",
    "sync_delta_ms",
];

/// Allowed deviation of a row spacing from `1 / sample_rate`.
pub const CADENCE_TOLERANCE: f64 = 0.20;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("bad header at column {column}: expected `{expected}`, found `{found}`")]
    BadHeader {
        /// 1-based.
        column: usize,
        expected: String,
        found: String,
    },
    #[error("bad row at line {line}: {reason}")]
    BadRow { line: u64, reason: String },
    #[error("t_target does not increase at line {line}")]
    NonMonotonicTime { line: u64 },
    #[error("row spacing {delta_ms} ms at line {line} deviates more than 20% from {expected_ms} ms")]
    Cadence { line: u64, delta_ms: f64, expected_ms: f64 },
    #[error("bad trial metadata: {0}")]
    Metadata(String),
}

/// Trial-level facts that live outside the CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMeta {
    pub user_id: String,
    pub mode: Source,
    pub shape: String,
    pub trial_index: u32,
    /// Hz.
    pub sample_rate: f64,
}

impl TrialMeta {
    fn check(&self) -> Result<(), DatasetError> {
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(DatasetError::Metadata(format!("sample rate {}", self.sample_rate)));
        }
        for (what, s) in [("user id", &self.user_id), ("shape", &self.shape)] {
            if s.is_empty() || s.contains(['/', '\\']) || s == "." || s == ".." {
                return Err(DatasetError::Metadata(format!(
                    "{what} `{s}` is not a usable path component"
                )));
            }
        }
        Ok(())
    }

    /// Path of the CSV under `root`.
    pub fn relative_path(&self) -> PathBuf {
        PathBuf::from(&self.user_id)
            .join(self.mode.as_str().to_ascii_lowercase())
            .join(&self.shape)
            .join(format!("trial_{}.csv", self.trial_index))
    }
}

/// One CSV row, values exactly as stored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialRow {
    pub frame_idx: u64,
    pub t_target_ms: f64,
    pub t_actual_ms: f64,
    pub tgt_position: [f64; 3],
    pub tgt_quat_xyzw: [f64; 4],
    pub act_position: [f64; 3],
    pub act_quat_xyzw: [f64; 4],
    pub ik_delay_ms: f64,
    pub e2e_latency_ms: f64,
    pub sync_delta_ms: f64,
}

fn xyzw(q: UnitQuaternion) -> [f64; 4] {
    let [w, x, y, z] = q.to_wxyz();
    [x, y, z, w]
}

fn from_xyzw(q: [f64; 4]) -> Result<UnitQuaternion, GeometryError> {
    UnitQuaternion::new(q[3], q[0], q[1], q[2])
}

impl TrialRow {
    pub fn from_sample(frame_idx: u64, s: &StampedSample) -> Self {
        Self {
            frame_idx,
            t_target_ms: s.t_target * 1e3,
            t_actual_ms: s.t_actual * 1e3,
            tgt_position: s.target_pose.position.to_array(),
            tgt_quat_xyzw: xyzw(s.target_pose.orientation),
            act_position: s.actual_pose.position.to_array(),
            act_quat_xyzw: xyzw(s.actual_pose.orientation),
            ik_delay_ms: s.ik_delay * 1e3,
            e2e_latency_ms: s.e2e_latency * 1e3,
            sync_delta_ms: s.sync_delta * 1e3,
        }
    }

    pub fn target_pose(&self) -> Result<Pose, GeometryError> {
        Ok(Pose::robot(
            Vec3::from_array(self.tgt_position),
            from_xyzw(self.tgt_quat_xyzw)?,
        ))
    }

    pub fn actual_pose(&self) -> Result<Pose, GeometryError> {
        Ok(Pose::robot(
            Vec3::from_array(self.act_position),
            from_xyzw(self.act_quat_xyzw)?,
        ))
    }

    pub fn to_sample(&self) -> Result<StampedSample, GeometryError> {
        Ok(StampedSample {
            t_target: self.t_target_ms * 1e-3,
            t_actual: self.t_actual_ms * 1e-3,
            target_pose: self.target_pose()?,
            actual_pose: self.actual_pose()?,
            ik_delay: self.ik_delay_ms * 1e-3,
            e2e_latency: self.e2e_latency_ms * 1e-3,
            sync_delta: self.sync_delta_ms * 1e-3,
        })
    }

    /// The 19 float columns in header order.
    pub fn values(&self) -> [f64; 19] {
        let mut v = [0.0; 19];
        v[0] = self.t_target_ms;
        v[1] = self.t_actual_ms;
        v[2..5].copy_from_slice(&self.tgt_position);
        v[5..9].copy_from_slice(&self.tgt_quat_xyzw);
        v[9..12].copy_from_slice(&self.act_position);
        v[12..16].copy_from_slice(&self.act_quat_xyzw);
        v[16] = self.ik_delay_ms;
        v[17] = self.e2e_latency_ms;
        v[18] = self.sync_delta_ms;
        v
    }

    pub fn from_values(frame_idx: u64, v: [f64; 19]) -> Self {
        Self {
            frame_idx,
            t_target_ms: v[0],
            t_actual_ms: v[1],
            tgt_position: [v[2], v[3], v[4]],
            tgt_quat_xyzw: [v[5], v[6], v[7], v[8]],
            act_position: [v[9], v[10], v[11]],
            act_quat_xyzw: [v[12], v[13], v[14], v[15]],
            ik_delay_ms: v[16],
            e2e_latency_ms: v[17],
            sync_delta_ms: v[18],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub meta: TrialMeta,
    pub rows: Vec<TrialRow>,
}

impl TrialRecord {
    pub fn from_samples(meta: TrialMeta, samples: &[StampedSample]) -> Self {
        let rows = samples
            .iter()
            .enumerate()
            .map(|(i, s)| TrialRow::from_sample(i as u64, s))
            .collect();
        Self { meta, rows }
    }

    pub fn samples(&self) -> Result<Vec<StampedSample>, GeometryError> {
        self.rows.iter().map(TrialRow::to_sample).collect()
    }

    /// Checks the record-level invariants, including row cadence against
    /// the nominal sample rate. Line numbers assume the CSV layout.
    pub fn validate(&self) -> Result<(), DatasetError> {
        self.meta.check()?;
        let expected_ms = 1e3 / self.meta.sample_rate;
        for (i, w) in self.rows.windows(2).enumerate() {
            let line = i as u64 + 3;
            let delta_ms = w[1].t_target_ms - w[0].t_target_ms;
            if delta_ms <= 0.0 {
                return Err(DatasetError::NonMonotonicTime { line });
            }
            if (delta_ms - expected_ms).abs() > CADENCE_TOLERANCE * expected_ms {
                return Err(DatasetError::Cadence {
                    line,
                    delta_ms,
                    expected_ms,
                });
            }
        }
        Ok(())
    }
}

/// Streaming CSV writer; one row per appended sample.
pub struct TrialWriter<W: Write> {
    out: csv::Writer<W>,
    next_idx: u64,
}

impl<W: Write> TrialWriter<W> {
    pub fn new(sink: W) -> Result<Self, DatasetError> {
        let mut out = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(sink);
        out.write_record(HEADER).map_err(csv_error)?;
        Ok(Self { out, next_idx: 0 })
    }

    pub fn rows_written(&self) -> u64 {
        self.next_idx
    }

    pub fn append_row(&mut self, row: &TrialRow) -> Result<(), DatasetError> {
        let mut fields = Vec::with_capacity(HEADER.len());
        fields.push(row.frame_idx.to_string());
        fields.extend(row.values().iter().map(|&v| format_g9(v)));
        self.out.write_record(&fields).map_err(csv_error)?;
        self.next_idx = row.frame_idx + 1;
        Ok(())
    }

    pub fn append(&mut self, sample: &StampedSample) -> Result<(), DatasetError> {
        let row = TrialRow::from_sample(self.next_idx, sample);
        self.append_row(&row)
    }

    pub fn finish(self) -> Result<W, DatasetError> {
        self.out
            .into_inner()
            .map_err(|e| DatasetError::Io(io::Error::other(e.to_string())))
    }
}

fn csv_error(e: csv::Error) -> DatasetError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => DatasetError::Io(io),
        other => DatasetError::BadRow {
            line,
            reason: format!("{other:?}"),
        },
    }
}

/// Writes the header plus one line per row. Returns the row count.
pub fn write_trial<W: Write>(rec: &TrialRecord, sink: W) -> Result<usize, DatasetError> {
    let mut w = TrialWriter::new(sink)?;
    for row in &rec.rows {
        w.append_row(row)?;
    }
    w.finish()?.flush()?;
    Ok(rec.rows.len())
}

/// Parses rows from a CSV source, validating the header, every value and
/// time ordering. Metadata comes from the caller.
pub fn read_rows<R: Read>(source: R) -> Result<Vec<TrialRow>, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(source);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(h) => h.map_err(csv_error)?,
        None => {
            return Err(DatasetError::BadHeader {
                column: 1,
                expected: HEADER[0].into(),
                found: String::new(),
            })
        }
    };
    for (i, expected) in HEADER.iter().enumerate() {
        let found = header.get(i).unwrap_or("");
        if found != *expected {
            return Err(DatasetError::BadHeader {
                column: i + 1,
                expected: (*expected).into(),
                found: found.into(),
            });
        }
    }
    if header.len() > HEADER.len() {
        return Err(DatasetError::BadHeader {
            column: HEADER.len() + 1,
            expected: String::new(),
            found: header[HEADER.len()].into(),
        });
    }
    let mut rows: Vec<TrialRow> = Vec::new();
    for rec in records {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let bad = |reason: String| DatasetError::BadRow { line, reason };
        if rec.len() != HEADER.len() {
            return Err(bad(format!("{} fields, expected {}", rec.len(), HEADER.len())));
        }
        let frame_idx: u64 = rec[0]
            .parse()
            .map_err(|_| bad(format!("frame_idx `{}` is not an unsigned integer", &rec[0])))?;
        let mut v = [0.0; 19];
        for (k, slot) in v.iter_mut().enumerate() {
            let text = &rec[k + 1];
            *slot = text
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| bad(format!("{} `{text}` is not a finite number", HEADER[k + 1])))?;
        }
        let row = TrialRow::from_values(frame_idx, v);
        for (name, q) in [("target", row.tgt_quat_xyzw), ("actual", row.act_quat_xyzw)] {
            from_xyzw(q).map_err(|e| bad(format!("{name} quaternion: {e}")))?;
        }
        if rows.last().is_some_and(|p| row.t_target_ms <= p.t_target_ms) {
            return Err(DatasetError::NonMonotonicTime { line });
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn read_trial<R: Read>(source: R, meta: TrialMeta) -> Result<TrialRecord, DatasetError> {
    meta.check()?;
    Ok(TrialRecord {
        meta,
        rows: read_rows(source)?,
    })
}

fn sidecar(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Writes `<root>/<user>/<mode>/<shape>/trial_<n>.csv` and its sidecar.
pub fn save_trial(root: &Path, rec: &TrialRecord) -> Result<PathBuf, DatasetError> {
    rec.meta.check()?;
    let path = root.join(rec.meta.relative_path());
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    write_trial(rec, io::BufWriter::new(fs::File::create(&path)?))?;
    let meta = serde_json::to_string_pretty(&rec.meta).expect("metadata serializes");
    fs::write(sidecar(&path), meta + "\n")?;
    Ok(path)
}

/// Metadata implied by a `<user>/<mode>/<shape>/trial_<n>.csv` path. The
/// sample rate defaults to 100 Hz.
pub fn meta_from_path(path: &Path) -> Result<TrialMeta, DatasetError> {
    let bad = || {
        DatasetError::Metadata(format!(
            "{} does not follow <user>/<mode>/<shape>/trial_<n>.csv",
            path.display()
        ))
    };
    let parts: Vec<&str> = path.iter().rev().take(4).map(|c| c.to_str().unwrap_or("")).collect();
    if parts.len() < 4 {
        return Err(bad());
    }
    let trial_index = parts[0]
        .strip_prefix("trial_")
        .and_then(|s| s.strip_suffix(".csv"))
        .and_then(|s| s.parse().ok())
        .ok_or_else(bad)?;
    Ok(TrialMeta {
        user_id: parts[3].into(),
        mode: parts[2].parse().map_err(|_| bad())?,
        shape: parts[1].into(),
        trial_index,
        sample_rate: 100.0,
    })
}

/// Loads a trial, taking metadata from the sidecar when present and from
/// the path otherwise.
pub fn load_trial(path: &Path) -> Result<TrialRecord, DatasetError> {
    let side = sidecar(path);
    let meta = if side.exists() {
        serde_json::from_str(&fs::read_to_string(&side)?)
            .map_err(|e| DatasetError::Metadata(format!("{}: {e}", side.display())))?
    } else {
        meta_from_path(path)?
    };
    read_trial(io::BufReader::new(fs::File::open(path)?), meta)
}

/// All `trial_*.csv` files below `root` (or `root` itself if it is a file),
/// in path order.
pub fn discover_trials(root: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    if root.is_file() {
        return Ok(vec![root.to_path_buf()]);
    }
    let mut out = Vec::new();
    for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| DatasetError::Io(io::Error::other(e.to_string())))?;
        let name = entry.file_name().to_string_lossy();
        if entry.file_type().is_file() && name.starts_with("trial_") && name.ends_with(".csv") {
            out.push(entry.into_path());
        }
    }
    Ok(out)
}

fn row_target(row: &TrialRow, t: f64) -> PoseSample {
    PoseSample {
        t,
        pose: row.target_pose().expect("rows are validated on read"),
        source: Source::Autopilot,
        latency_hint: None,
        seq: Some(row.frame_idx),
    }
}

/// Recorded targets one per step, stamped with their recorded times.
pub fn replay_fixed(rec: &TrialRecord) -> impl Iterator<Item = PoseSample> + '_ {
    rec.rows.iter().map(|r| row_target(r, r.t_target_ms * 1e-3))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayStats {
    pub emitted: usize,
    /// Emission time minus scheduled time, seconds, per sample.
    pub jitter: Vec<f64>,
}

impl ReplayStats {
    pub fn max_jitter(&self) -> f64 {
        self.jitter.iter().copied().fold(0.0, f64::max)
    }
}

/// Emits recorded targets at their recorded cadence against the monotonic
/// clock. Samples are stamped with `clock_offset` plus elapsed wall time.
pub fn replay_realtime(rec: &TrialRecord, clock_offset: f64, mut emit: impl FnMut(PoseSample)) -> ReplayStats {
    let start = Instant::now();
    let t0 = rec.rows.first().map_or(0.0, |r| r.t_target_ms);
    let mut jitter = Vec::with_capacity(rec.rows.len());
    for row in &rec.rows {
        let due = Duration::from_secs_f64(((row.t_target_ms - t0) * 1e-3).max(0.0));
        if let Some(wait) = due.checked_sub(start.elapsed()) {
            std::thread::sleep(wait);
        }
        let now = start.elapsed();
        jitter.push(now.as_secs_f64() - due.as_secs_f64());
        emit(row_target(row, clock_offset + now.as_secs_f64()));
    }
    ReplayStats {
        emitted: rec.rows.len(),
        jitter,
    }
}
