use std::fmt::Write;

use proxyarm::wire::{decode_imu, xor_checksum, IMU_FRAME_LEN, IMU_HEADER};
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct FrameReport {
    pub bytes: usize,
    pub header: Option<u8>,
    pub timestamp_ms: Option<u32>,
    /// w, x, y, z as stored.
    pub quat: Option<[f32; 4]>,
    pub norm: Option<f64>,
    pub checksum_found: Option<u8>,
    pub checksum_computed: Option<u8>,
    pub checksum_ok: bool,
    pub error: Option<String>,
}

/// Decodes `text` (hex, whitespace and a `0x` prefix allowed) and reports
/// every field it can, even for a rejected frame.
pub fn check(text: &str) -> FrameReport {
    let cleaned: String = text.split_whitespace().collect();
    let cleaned = cleaned.strip_prefix("0x").unwrap_or(&cleaned);
    let bytes = match hex::decode(cleaned) {
        Ok(b) => b,
        Err(e) => {
            return FrameReport {
                bytes: 0,
                header: None,
                timestamp_ms: None,
                quat: None,
                norm: None,
                checksum_found: None,
                checksum_computed: None,
                checksum_ok: false,
                error: Some(format!("not hex: {e}")),
            }
        }
    };
    let full = bytes.len() == IMU_FRAME_LEN;
    let raw = |i: usize| -> [u8; 4] { bytes[i..i + 4].try_into().unwrap() };
    let quat = full.then(|| [5, 9, 13, 17].map(|i| f32::from_le_bytes(raw(i))));
    let computed = full.then(|| xor_checksum(&bytes[..IMU_FRAME_LEN - 1]));
    let found = full.then(|| bytes[IMU_FRAME_LEN - 1]);
    FrameReport {
        bytes: bytes.len(),
        header: bytes.first().copied(),
        timestamp_ms: full.then(|| u32::from_le_bytes(raw(1))),
        quat,
        norm: quat.map(|q| q.iter().map(|&c| f64::from(c).powi(2)).sum::<f64>().sqrt()),
        checksum_found: found,
        checksum_computed: computed,
        checksum_ok: full && computed == found,
        error: decode_imu(&bytes).err().map(|e| e.to_string()),
    }
}

impl FrameReport {
    pub fn text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "length    {} bytes (expected {IMU_FRAME_LEN})", self.bytes);
        if let Some(h) = self.header {
            let mark = if h == IMU_HEADER { "OK" } else { "BAD" };
            let _ = writeln!(s, "header    {h:#04x} {mark}");
        }
        if let Some(t) = self.timestamp_ms {
            let _ = writeln!(s, "timestamp {t} ms");
        }
        if let (Some([w, x, y, z]), Some(n)) = (self.quat, self.norm) {
            let _ = writeln!(s, "quat      w={w} x={x} y={y} z={z} (norm {n:.6})");
        }
        if let (Some(c), Some(f)) = (self.checksum_computed, self.checksum_found) {
            let mark = if self.checksum_ok { "OK" } else { "MISMATCH" };
            let _ = writeln!(s, "checksum  {f:#04x} (computed {c:#04x}) {mark}");
        }
        match &self.error {
            Some(e) => {
                let _ = writeln!(s, "result    rejected: {e}");
            }
            None => {
                let _ = writeln!(s, "result    valid frame");
            }
        }
        s
    }
}
