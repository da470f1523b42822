use serde::{Deserialize, Serialize};

use super::{CaptureError, PoseSample, Source};
use crate::geometry::{Pose, UnitQuaternion, Vec3};

/// Blend weight pulled toward each fresh IMU reading.
pub const DEFAULT_FUSION_ALPHA: f64 = 0.98;

/// Complementary filter state: the IMU owns orientation, vision owns position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionState {
    pub orientation: UnitQuaternion,
    pub last_cv_pos: Vec3,
    pub last_cv_time: f64,
    pub alpha: f64,
    /// Time of the most recent fused sample.
    pub t: f64,
}

impl FusionState {
    pub fn new(position: Vec3, orientation: UnitQuaternion, alpha: f64) -> Result<Self, CaptureError> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(CaptureError::BadAlpha(alpha));
        }
        Ok(Self {
            orientation,
            last_cv_pos: position,
            last_cv_time: 0.0,
            alpha,
            t: 0.0,
        })
    }
}

/// Advances the filter by `dt`. Position is the latest vision fix, held
/// between fixes; orientation slerps toward the IMU reading by `alpha`.
/// Positions are expected in the robot frame already.
pub fn fuse_cv_imu(
    state: &FusionState,
    cv_pos: Option<Vec3>,
    imu_quat: Option<UnitQuaternion>,
    dt: f64,
) -> Result<(FusionState, PoseSample), CaptureError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(CaptureError::BadDt(dt));
    }
    if cv_pos.is_none() && imu_quat.is_none() {
        return Err(CaptureError::NoFusionInput);
    }
    let mut next = *state;
    next.t = state.t + dt;
    if let Some(p) = cv_pos {
        if !p.is_finite() {
            return Err(crate::geometry::GeometryError::NonFinite("vision position").into());
        }
        next.last_cv_pos = p;
        next.last_cv_time = next.t;
    }
    if let Some(q) = imu_quat {
        next.orientation = state.orientation.slerp(q, state.alpha);
    }
    let sample = PoseSample {
        t: next.t,
        pose: Pose::robot(next.last_cv_pos, next.orientation),
        source: Source::CvImu,
        latency_hint: None,
        seq: None,
    };
    Ok((next, sample))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn full_trust_copies_imu() {
        let s = FusionState::new(Vec3::ZERO, UnitQuaternion::IDENTITY, 1.0).unwrap();
        let q = UnitQuaternion::from_axis_angle(Vec3::new(1.0, 2.0, 3.0), 0.7);
        let (n, _) = fuse_cv_imu(&s, None, Some(q), 0.005).unwrap();
        assert!(n.orientation.angle_to(q) < 1e-12);
    }

    #[test]
    fn half_alpha_bisects() {
        let s = FusionState::new(Vec3::ZERO, UnitQuaternion::IDENTITY, 0.5).unwrap();
        let q = UnitQuaternion::from_axis_angle(Vec3::Z, FRAC_PI_2);
        let (n, _) = fuse_cv_imu(&s, None, Some(q), 0.005).unwrap();
        let expect = UnitQuaternion::from_axis_angle(Vec3::Z, FRAC_PI_2 / 2.0);
        assert!(n.orientation.angle_to(expect) < 1e-6);
    }

    #[test]
    fn position_held_without_vision() {
        let mut s = FusionState::new(Vec3::ZERO, UnitQuaternion::IDENTITY, DEFAULT_FUSION_ALPHA).unwrap();
        let p = Vec3::new(0.3, -0.1, 0.2);
        (s, _) = fuse_cv_imu(&s, Some(p), None, 0.005).unwrap();
        let q = UnitQuaternion::from_axis_angle(Vec3::X, 0.1);
        for _ in 0..10 {
            let (n, sample) = fuse_cv_imu(&s, None, Some(q), 0.005).unwrap();
            assert_eq!(sample.pose.position, p);
            s = n;
        }
        assert!((s.last_cv_time - 0.005).abs() < 1e-15);
    }

    #[test]
    fn orientation_held_without_imu() {
        let q = UnitQuaternion::from_axis_angle(Vec3::Y, 0.4);
        let s = FusionState::new(Vec3::ZERO, q, DEFAULT_FUSION_ALPHA).unwrap();
        let (n, _) = fuse_cv_imu(&s, Some(Vec3::X), None, 0.005).unwrap();
        assert_eq!(n.orientation, q);
    }

    #[test]
    fn rejects_bad_input() {
        let s = FusionState::new(Vec3::ZERO, UnitQuaternion::IDENTITY, 0.9).unwrap();
        assert_eq!(
            fuse_cv_imu(&s, None, None, 0.005).unwrap_err(),
            CaptureError::NoFusionInput
        );
        assert!(fuse_cv_imu(&s, Some(Vec3::X), None, 0.0).is_err());
        assert!(FusionState::new(Vec3::ZERO, UnitQuaternion::IDENTITY, 1.5).is_err());
    }

    proptest! {
        #[test]
        fn never_nan_and_unit(
            alpha in 0.0f64..=1.0,
            rv in proptest::collection::vec(proptest::array::uniform3(-4.0f64..4.0), 1..50),
        ) {
            let mut s = FusionState::new(Vec3::ZERO, UnitQuaternion::IDENTITY, alpha).unwrap();
            for (i, r) in rv.iter().enumerate() {
                let q = UnitQuaternion::from_rotation_vector(Vec3::from_array(*r));
                let cv = (i % 3 == 0).then_some(Vec3::from_array(*r));
                let (n, sample) = fuse_cv_imu(&s, cv, Some(q), 0.005).unwrap();
                prop_assert!((n.orientation.norm() - 1.0).abs() < 1e-12);
                prop_assert!(sample.pose.position.is_finite());
                prop_assert!(n.orientation.to_wxyz().iter().all(|c| c.is_finite()));
                s = n;
            }
        }
    }
}
