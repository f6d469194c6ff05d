//! Orientation fusion and feature extraction for handle-bar IMU data.
//!
//! Roll and pitch come from a PI-style complementary filter that blends the
//! integrated gyro rate (trusted at high frequency) with the gravity-derived
//! accelerometer angles (trusted at low frequency). The continuous filter is
//! discretized with the bilinear transform at the trace's sampling rate.

mod butterworth;
mod complementary;
mod features;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

pub use butterworth::{butterworth_lowpass, ButterworthLowpass, BUTTERWORTH_ORDER};
pub use complementary::{
    discretize, filter_step, ComplementaryFilter, DigitalFilterCoefficients, FilterGains, FilterState,
    OrientationEstimate, DEFAULT_KI, DEFAULT_KP,
};
pub use features::{FeatureChannel, FeatureExtractor, FusionConfig};

/// Standard gravity used for compensation, m/s².
pub const GRAVITY: f64 = 9.81;

/// Below this specific-force norm the device is treated as in free fall.
pub const MIN_ACCEL_NORM: f64 = 0.1;

/// Roll and pitch of the gravity vector seen by the accelerometer.
///
/// Returns `(roll, pitch)` in radians.
pub fn accel_to_angles(accel: [f64; 3]) -> Result<(f64, f64)> {
    let [ax, ay, az] = accel;
    if !accel.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite(format!("accelerometer sample {accel:?}")));
    }
    let norm = (ax * ax + ay * ay + az * az).sqrt();
    if norm < MIN_ACCEL_NORM {
        return Err(Error::DegenerateInput(format!(
            "specific force norm {norm:.3} m/s² is too small to observe roll/pitch"
        )));
    }
    let roll = ay.atan2(az);
    let pitch = (-ax).atan2((ay * ay + az * az).sqrt());
    Ok((roll, pitch))
}

/// Rotation taking device-frame vectors to the motion frame: undo roll about
/// x first, then pitch about y.
pub fn motion_from_device(roll: f64, pitch: f64) -> Matrix3<f64> {
    let (sr, cr) = roll.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cr, -sr, 0.0, sr, cr);
    let ry = Matrix3::new(cp, 0.0, sp, 0.0, 1.0, 0.0, -sp, 0.0, cp);
    ry * rx
}

/// Aligns an accelerometer sample with the motion frame and removes gravity.
pub fn rotate_to_body(accel: [f64; 3], roll: f64, pitch: f64) -> Result<[f64; 3]> {
    if !(accel.iter().all(|v| v.is_finite()) && roll.is_finite() && pitch.is_finite()) {
        return Err(Error::NonFinite("rotate_to_body input".into()));
    }
    let v = motion_from_device(roll, pitch) * Vector3::from(accel) - Vector3::new(0.0, 0.0, GRAVITY);
    Ok([v.x, v.y, v.z])
}

/// Wraps an angle into (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let mut r = (a + PI).rem_euclid(2.0 * PI) - PI;
    if r <= -PI {
        r += 2.0 * PI;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn level_device() {
        let (r, p) = accel_to_angles([0.0, 0.0, 9.81]).unwrap();
        assert_eq!((r, p), (0.0, 0.0));
    }

    #[test]
    fn rolled_ninety_degrees() {
        let (r, p) = accel_to_angles([0.0, 9.81, 0.0]).unwrap();
        assert!((r - FRAC_PI_2).abs() < 1e-15);
        assert_eq!(p, 0.0);
    }

    #[test]
    fn pure_pitch_inverts() {
        let th: f64 = 0.3;
        let (r, p) = accel_to_angles([-9.81 * th.sin(), 0.0, 9.81 * th.cos()]).unwrap();
        assert!(r.abs() < 1e-15);
        assert!((p - 0.3).abs() < 1e-14);
    }

    #[test]
    fn free_fall_is_degenerate() {
        assert!(matches!(
            accel_to_angles([0.01, 0.02, 0.05]),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn rotation_undoes_tilt() {
        for &(roll, pitch) in &[(0.0, 0.3), (0.2, -0.4), (-0.5, 0.1)] {
            let (sr, cr) = f64::sin_cos(roll);
            let (sp, cp) = f64::sin_cos(pitch);
            let g = [-GRAVITY * sp, GRAVITY * sr * cp, GRAVITY * cr * cp];
            let b = rotate_to_body(g, roll, pitch).unwrap();
            for v in b {
                assert!(v.abs() < 1e-12, "{b:?}");
            }
        }
    }

    #[test]
    fn stand_still_and_longitudinal() {
        assert_eq!(
            rotate_to_body([0.0, 0.0, 9.81], 0.0, 0.0).unwrap(),
            [0.0, 0.0, 0.0]
        );
        assert_eq!(
            rotate_to_body([1.0, 0.0, 9.81], 0.0, 0.0).unwrap(),
            [1.0, 0.0, 0.0]
        );
    }

    #[test]
    fn wrap_convention() {
        assert!((wrap_angle(PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert_eq!(wrap_angle(0.25), 0.25);
    }
}
