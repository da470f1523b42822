//! Wire formats: the binary IMU frame, the ArPose text message and the
//! drop-oldest ingress buffer between network readers and the control loop.

mod buffer;
mod imu;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Frame, Pose, UnitQuaternion, Vec3};

pub use buffer::{BufferCounters, DropOldestBuffer, DEFAULT_CAPACITY};
pub use imu::{
    decode_imu, encode_imu, read_imu_stream, xor_checksum, ImuDecodeError, ImuPacket, ImuStreamDecoder,
    NotUnitQuaternion, IMU_FRAME_LEN, IMU_HEADER, IMU_NORM_TOLERANCE,
};

#[derive(Debug, Error)]
pub enum ArPoseError {
    #[error("malformed pose message: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("pose message carries non-finite values")]
    NonFinite,
}

/// One pose sample from an AR client, in the client's Y-up frame.
///
/// On the wire it is a single JSON object:
/// `{"seq":7,"t_ms":1712,"pos":{"x":0.1,"y":1.2,"z":-0.3},"quat":{"w":1,"x":0,"y":0,"z":0}}`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArPoseMsg {
    pub seq: u64,
    /// Sender clock, milliseconds.
    pub t_ms: u64,
    pub pos: Vec3,
    pub quat: UnitQuaternion,
}

impl ArPoseMsg {
    pub fn parse(text: &str) -> Result<Self, ArPoseError> {
        let msg: ArPoseMsg = serde_json::from_str(text)?;
        if !msg.pos.is_finite() {
            return Err(ArPoseError::NonFinite);
        }
        Ok(msg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("pose message serializes")
    }

    pub fn pose(&self) -> Pose {
        Pose::new(self.pos, self.quat, Frame::ArYup)
    }
}

/// A vision position fix, in the client's Y-up frame.
///
/// `{"seq":3,"t_ms":1710,"pos":{"x":0.1,"y":1.2,"z":-0.3}}`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvPositionMsg {
    pub seq: u64,
    pub t_ms: u64,
    pub pos: Vec3,
}

impl CvPositionMsg {
    pub fn parse(text: &str) -> Result<Self, ArPoseError> {
        let msg: CvPositionMsg = serde_json::from_str(text)?;
        if !msg.pos.is_finite() {
            return Err(ArPoseError::NonFinite);
        }
        Ok(msg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_example() {
        let m = ArPoseMsg::parse(
            r#"{"seq":7,"t_ms":1712,"pos":{"x":0.1,"y":1.2,"z":-0.3},"quat":{"w":1,"x":0,"y":0,"z":0}}"#,
        )
        .unwrap();
        assert_eq!(m.seq, 7);
        assert_eq!(m.pos, Vec3::new(0.1, 1.2, -0.3));
        assert_eq!(m.pose().frame, Frame::ArYup);
        assert_eq!(ArPoseMsg::parse(&m.to_json()).unwrap(), m);
    }

    #[test]
    fn rejects_bad_messages() {
        for bad in [
            r#"{"seq":1,"t_ms":0,"pos":{"x":0,"y":0,"z":0},"quat":{"w":0,"x":0,"y":0,"z":0}}"#,
            r#"{"seq":1,"t_ms":0,"pos":{"x":0,"y":0},"quat":{"w":1,"x":0,"y":0,"z":0}}"#,
            r#"{"seq":-1,"t_ms":0,"pos":{"x":0,"y":0,"z":0},"quat":{"w":1,"x":0,"y":0,"z":0}}"#,
            r#"{"seq":1,"t_ms":0,"pos":{"x":1e999,"y":0,"z":0},"quat":{"w":1,"x":0,"y":0,"z":0}}"#,
            "not json",
        ] {
            assert!(ArPoseMsg::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn cv_message() {
        let m = CvPositionMsg::parse(r#"{"seq":3,"t_ms":1710,"pos":{"x":0.1,"y":1.2,"z":-0.3}}"#).unwrap();
        assert_eq!(m.pos, Vec3::new(0.1, 1.2, -0.3));
        assert!(CvPositionMsg::parse(r#"{"seq":3,"t_ms":1710}"#).is_err());
    }
}
