//! 22-byte IMU frame.
//!
//! | offset | size | field                         |
//! |--------|------|-------------------------------|
//! | 0      | 1    | header `0xAA`                 |
//! | 1      | 4    | timestamp, ms since boot, u32 LE (wraps) |
//! | 5      | 4    | quaternion w, f32 LE          |
//! | 9      | 4    | quaternion x, f32 LE          |
//! | 13     | 4    | quaternion y, f32 LE          |
//! | 17     | 4    | quaternion z, f32 LE          |
//! | 21     | 1    | XOR of bytes 0..=20           |

use std::io::{self, Read};

use thiserror::Error;

use crate::geometry::UnitQuaternion;

pub const IMU_HEADER: u8 = 0xAA;
pub const IMU_FRAME_LEN: usize = 22;
/// Accepted deviation of the decoded quaternion from unit norm.
pub const IMU_NORM_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ImuDecodeError {
    #[error("frame is {0} bytes, expected 22")]
    BadLength(usize),
    #[error("bad header byte {0:#04x}")]
    BadHeader(u8),
    #[error("checksum mismatch: computed {computed:#04x}, frame carries {found:#04x}")]
    BadChecksum { computed: u8, found: u8 },
    #[error("quaternion component {0} is not finite")]
    NonFiniteFloat(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("IMU quaternion norm {0} is outside 1 ± 1e-3")]
pub struct NotUnitQuaternion(pub f64);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuPacket {
    pub timestamp_ms: u32,
    /// `(w, x, y, z)`
    pub quat: [f32; 4],
}

impl ImuPacket {
    pub fn new(timestamp_ms: u32, quat: [f32; 4]) -> Self {
        Self { timestamp_ms, quat }
    }

    pub fn from_orientation(timestamp_ms: u32, q: UnitQuaternion) -> Self {
        let [w, x, y, z] = q.to_wxyz();
        Self::new(timestamp_ms, [w as f32, x as f32, y as f32, z as f32])
    }

    /// The carried rotation, provided the sensor's quaternion is within
    /// tolerance of unit norm.
    pub fn orientation(&self) -> Result<UnitQuaternion, NotUnitQuaternion> {
        let [w, x, y, z] = self.quat.map(f64::from);
        let norm = (w * w + x * x + y * y + z * z).sqrt();
        if !((norm - 1.0).abs() <= IMU_NORM_TOLERANCE) {
            return Err(NotUnitQuaternion(norm));
        }
        UnitQuaternion::new(w, x, y, z).map_err(|_| NotUnitQuaternion(norm))
    }
}

pub fn xor_checksum(bytes: &[u8]) -> u8 {
    bytes.iter().fold(0, |acc, b| acc ^ b)
}

pub fn encode_imu(p: &ImuPacket) -> [u8; IMU_FRAME_LEN] {
    let mut out = [0u8; IMU_FRAME_LEN];
    out[0] = IMU_HEADER;
    out[1..5].copy_from_slice(&p.timestamp_ms.to_le_bytes());
    for (i, v) in p.quat.iter().enumerate() {
        out[5 + 4 * i..9 + 4 * i].copy_from_slice(&v.to_le_bytes());
    }
    out[21] = xor_checksum(&out[..21]);
    out
}

pub fn decode_imu(buf: &[u8]) -> Result<ImuPacket, ImuDecodeError> {
    if buf.len() != IMU_FRAME_LEN {
        return Err(ImuDecodeError::BadLength(buf.len()));
    }
    if buf[0] != IMU_HEADER {
        return Err(ImuDecodeError::BadHeader(buf[0]));
    }
    let computed = xor_checksum(&buf[..21]);
    if computed != buf[21] {
        return Err(ImuDecodeError::BadChecksum {
            computed,
            found: buf[21],
        });
    }
    let timestamp_ms = u32::from_le_bytes(buf[1..5].try_into().expect("4 bytes"));
    let mut quat = [0f32; 4];
    for (i, q) in quat.iter_mut().enumerate() {
        *q = f32::from_le_bytes(buf[5 + 4 * i..9 + 4 * i].try_into().expect("4 bytes"));
        if !q.is_finite() {
            return Err(ImuDecodeError::NonFiniteFloat(i));
        }
    }
    Ok(ImuPacket { timestamp_ms, quat })
}

/// Incremental decoder for a serial byte stream. Resynchronizes after
/// garbage or corruption by scanning for the next header byte. Holds at
/// most one partial frame between calls.
#[derive(Debug, Default)]
pub struct ImuStreamDecoder {
    pending: Vec<u8>,
    skipped: u64,
    rejected: u64,
}

impl ImuStreamDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Bytes discarded while hunting for a header.
    pub fn skipped_bytes(&self) -> u64 {
        self.skipped
    }

    /// Header-aligned candidates that failed validation.
    pub fn rejected_frames(&self) -> u64 {
        self.rejected
    }

    pub fn push(&mut self, bytes: &[u8]) -> Vec<ImuPacket> {
        self.pending.extend_from_slice(bytes);
        let mut out = Vec::new();
        let mut start = 0;
        loop {
            match self.pending[start..].iter().position(|&b| b == IMU_HEADER) {
                None => {
                    self.skipped += (self.pending.len() - start) as u64;
                    start = self.pending.len();
                    break;
                }
                Some(off) => {
                    self.skipped += off as u64;
                    start += off;
                }
            }
            if self.pending.len() - start < IMU_FRAME_LEN {
                break;
            }
            match decode_imu(&self.pending[start..start + IMU_FRAME_LEN]) {
                Ok(p) => {
                    out.push(p);
                    start += IMU_FRAME_LEN;
                }
                Err(_) => {
                    // This header was a false start; resume the scan after it.
                    self.rejected += 1;
                    self.skipped += 1;
                    start += 1;
                }
            }
        }
        self.pending.drain(..start);
        out
    }
}

/// Drains `reader` to EOF, feeding every decoded packet to `on_packet`.
pub fn read_imu_stream<R: Read>(
    mut reader: R,
    decoder: &mut ImuStreamDecoder,
    mut on_packet: impl FnMut(ImuPacket),
) -> io::Result<()> {
    let mut chunk = [0u8; 256];
    loop {
        let n = match reader.read(&mut chunk) {
            Ok(0) => return Ok(()),
            Ok(n) => n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e),
        };
        decoder.push(&chunk[..n]).into_iter().for_each(&mut on_packet);
    }
}
