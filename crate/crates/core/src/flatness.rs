//! Inversion of the differential flatness map: flat outputs and their
//! derivatives back to physical quadrotor quantities.
//!
//! The thrust axis is the normalized sum of commanded acceleration and
//! gravity compensation; the body frame is completed from the yaw heading
//! vector. Attitude is carried as a rotation matrix internally (Z-X-Y
//! Euler angles are extracted only for reporting), body rates come from
//! differentiating the thrust-axis construction, and body moments follow
//! from the rigid-body equation with finite-differenced rates.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Free-fall guard on `|a + g e_z|` in m/s^2.
const FREE_FALL_EPS: f64 = 1e-6;

/// Physical parameters of one quadrotor.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct QuadrotorParams {
    /// Mass in kg.
    pub mass: f64,
    /// Rotor arm length in m.
    pub arm_length: f64,
    /// Gravitational acceleration in m/s^2.
    pub gravity: f64,
    /// Diagonal of the inertia matrix in kg m^2.
    pub inertia: [f64; 3],
}

impl QuadrotorParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("mass", self.mass),
            ("arm_length", self.arm_length),
            ("gravity", self.gravity),
            ("inertia x", self.inertia[0]),
            ("inertia y", self.inertia[1]),
            ("inertia z", self.inertia[2]),
        ];
        for (name, v) in all {
            if !(v > 0.0) {
                return Err(Error::Config(format!(
                    "quadrotor parameter {name} = {v} must be positive"
                )));
            }
        }
        Ok(())
    }

    pub fn inertia_vector(&self) -> Vector3<f64> {
        Vector3::new(self.inertia[0], self.inertia[1], self.inertia[2])
    }
}

/// Physical state recovered from the flat outputs at one instant.
#[derive(Debug, Clone, Copy)]
pub struct QuadrotorState {
    /// Collective thrust in N.
    pub thrust: f64,
    /// Z-X-Y Euler angles in rad.
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    /// Body rates in rad/s.
    pub body_rates: Vector3<f64>,
    /// Body moments in N m, filled by the post-pass over a rate series.
    pub moments: Option<Vector3<f64>>,
}

/// Collective thrust, attitude angles, and body rotation from commanded
/// acceleration and yaw.
///
/// Fails on free fall (thrust direction undefined) and when the thrust
/// axis is parallel to the heading vector (pitch at +/-90 deg).
pub fn thrust_and_attitude(
    accel: &Vector3<f64>,
    yaw: f64,
    params: &QuadrotorParams,
) -> Result<(f64, f64, f64, Matrix3<f64>)> {
    let lift = accel + Vector3::new(0.0, 0.0, params.gravity);
    let lift_norm = lift.norm();
    if lift_norm <= FREE_FALL_EPS {
        return Err(Error::FlatnessSingular { norm: lift_norm });
    }
    let thrust = params.mass * lift_norm;
    let z_b = lift / lift_norm;
    let heading = Vector3::new(yaw.cos(), yaw.sin(), 0.0);
    let y_raw = z_b.cross(&heading);
    let y_norm = y_raw.norm();
    if y_norm <= 1e-9 {
        return Err(Error::AttitudeSingular);
    }
    let y_b = y_raw / y_norm;
    let x_b = y_b.cross(&z_b);
    let rotation = Matrix3::from_columns(&[x_b, y_b, z_b]);
    let (roll, pitch, _) = euler_zxy(&rotation);
    Ok((thrust, roll, pitch, rotation))
}

/// Z-X-Y Euler angles (roll about x, pitch about y, yaw about z) from a
/// rotation matrix. Valid away from the pitch singularity.
pub fn euler_zxy(r: &Matrix3<f64>) -> (f64, f64, f64) {
    let roll = r[(2, 1)].clamp(-1.0, 1.0).asin();
    let pitch = (-r[(2, 0)]).atan2(r[(2, 2)]);
    let yaw = (-r[(0, 1)]).atan2(r[(1, 1)]);
    (roll, pitch, yaw)
}

/// Body rates from the time derivative of the thrust-axis construction.
///
/// The component of the scaled jerk orthogonal to the thrust axis is the
/// thrust-axis velocity `h = z_B'`, which fixes the roll and pitch rates.
/// The yaw rate follows from differentiating the heading completion
/// `y_B = z_B x x_C / |z_B x x_C|`.
pub fn body_rates(
    jerk: &Vector3<f64>,
    yaw: f64,
    yaw_rate: f64,
    thrust: f64,
    rotation: &Matrix3<f64>,
    params: &QuadrotorParams,
) -> Result<Vector3<f64>> {
    if thrust <= FREE_FALL_EPS {
        return Err(Error::FlatnessSingular { norm: thrust });
    }
    let x_b: Vector3<f64> = rotation.column(0).into();
    let y_b: Vector3<f64> = rotation.column(1).into();
    let z_b: Vector3<f64> = rotation.column(2).into();
    // h = (m/u1) (j - (z_B . j) z_B) equals z_B' = q x_B - p y_B.
    let scaled = jerk * (params.mass / thrust);
    let h = scaled - z_b * z_b.dot(&scaled);
    let p = -h.dot(&y_b);
    let q = h.dot(&x_b);
    // y_B' = -r x_B + p z_B with y_B = w / |w|, w = z_B x x_C, so
    // r = -x_B . w' / |w|.
    let heading = Vector3::new(yaw.cos(), yaw.sin(), 0.0);
    let heading_dot = Vector3::new(-yaw.sin(), yaw.cos(), 0.0) * yaw_rate;
    let w = z_b.cross(&heading);
    let w_norm = w.norm();
    if w_norm <= 1e-9 {
        return Err(Error::AttitudeSingular);
    }
    let w_dot = h.cross(&heading) + z_b.cross(&heading_dot);
    let r = -x_b.dot(&w_dot) / w_norm;
    Ok(Vector3::new(p, q, r))
}

/// Body moments along a uniformly sampled body-rate series:
/// `u = I w' + w x I w` with the rate derivative by central differences
/// (one-sided at the ends).
pub fn body_moments(
    omega_series: &[Vector3<f64>],
    params: &QuadrotorParams,
    dt: f64,
) -> Result<Vec<Vector3<f64>>> {
    if omega_series.len() < 3 {
        return Err(Error::Config(format!(
            "body-rate series has {} samples, need at least 3",
            omega_series.len()
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::Config(format!("sample step {dt} must be positive")));
    }
    let inertia = params.inertia_vector();
    let n = omega_series.len();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let omega_dot = if k == 0 {
            (omega_series[1] - omega_series[0]) / dt
        } else if k == n - 1 {
            (omega_series[n - 1] - omega_series[n - 2]) / dt
        } else {
            (omega_series[k + 1] - omega_series[k - 1]) / (2.0 * dt)
        };
        let w = omega_series[k];
        let i_w = inertia.component_mul(&w);
        out.push(inertia.component_mul(&omega_dot) + w.cross(&i_w));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params() -> QuadrotorParams {
        QuadrotorParams {
            mass: 1.0,
            arm_length: 0.2,
            gravity: 9.81,
            inertia: [0.016, 0.016, 0.016],
        }
    }

    #[test]
    fn hover_thrust_and_level_attitude() {
        let p = params();
        for yaw in [0.0, 0.7, -2.1] {
            let (u1, roll, pitch, r) =
                thrust_and_attitude(&Vector3::zeros(), yaw, &p).unwrap();
            assert_relative_eq!(u1, 9.81, epsilon = 1e-12);
            assert!(roll.abs() <= 1e-12 && pitch.abs() <= 1e-12);
            let (_, _, yaw_out) = euler_zxy(&r);
            assert_relative_eq!(yaw_out, yaw, epsilon = 1e-12);
        }
    }

    #[test]
    fn forward_acceleration_pitches() {
        let p = params();
        let accel = Vector3::new(1.0, 0.0, 0.0);
        let (u1, roll, pitch, r) = thrust_and_attitude(&accel, 0.0, &p).unwrap();
        assert!(roll.abs() <= 1e-12);
        assert_relative_eq!(pitch, 1.0f64.atan2(9.81), epsilon = 1e-12);
        // Forward check: m (a + g e_z) = u1 R e_z.
        let recon = r * Vector3::new(0.0, 0.0, u1);
        let target = (accel + Vector3::new(0.0, 0.0, 9.81)) * p.mass;
        assert!((recon - target).norm() <= 1e-10);
    }

    #[test]
    fn vertical_acceleration_keeps_level() {
        let p = params();
        let (u1, roll, pitch, _) =
            thrust_and_attitude(&Vector3::new(0.0, 0.0, 2.0), 0.3, &p).unwrap();
        assert_relative_eq!(u1, 9.81 + 2.0, epsilon = 1e-12);
        assert!(roll.abs() <= 1e-12 && pitch.abs() <= 1e-12);
    }

    #[test]
    fn rotation_is_orthonormal() {
        let p = params();
        let accel = Vector3::new(2.0, -1.5, 0.7);
        let (_, _, _, r) = thrust_and_attitude(&accel, 1.1, &p).unwrap();
        let defect = (r.transpose() * r - Matrix3::identity()).norm();
        assert!(defect <= 1e-9);
        assert_relative_eq!(r.determinant(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn free_fall_is_singular() {
        let p = params();
        let r = thrust_and_attitude(&Vector3::new(0.0, 0.0, -9.81), 0.0, &p);
        assert!(matches!(r, Err(Error::FlatnessSingular { .. })));
    }

    #[test]
    fn ninety_degree_pitch_is_singular() {
        let p = params();
        // Thrust axis ends up along +x, parallel to the yaw-0 heading.
        let r = thrust_and_attitude(&Vector3::new(5.0, 0.0, -9.81), 0.0, &p);
        assert!(matches!(r, Err(Error::AttitudeSingular)));
    }

    #[test]
    fn hover_rates_vanish() {
        let p = params();
        let (u1, _, _, rot) = thrust_and_attitude(&Vector3::zeros(), 0.0, &p).unwrap();
        let w = body_rates(&Vector3::zeros(), 0.0, 0.0, u1, &rot, &p).unwrap();
        assert!(w.norm() <= 1e-14);
    }

    #[test]
    fn rotation_derivative_matches_rates() {
        // Along an analytic trajectory, (R(t+h) - R(t-h)) / 2h must equal
        // R [w]_x with w from the rate construction.
        let p = params();
        let accel = |t: f64| Vector3::new((0.9 * t).sin(), 0.4 * (0.7 * t).cos(), 0.3 * t);
        let jerk = |t: f64| Vector3::new(0.9 * (0.9 * t).cos(), -0.28 * (0.7 * t).sin(), 0.3);
        let yaw = |t: f64| 0.2 * t;
        let yaw_rate = 0.2;
        for &t in &[0.0, 0.5, 1.3, 2.7] {
            let (u1, _, _, r) = thrust_and_attitude(&accel(t), yaw(t), &p).unwrap();
            let w = body_rates(&jerk(t), yaw(t), yaw_rate, u1, &r, &p).unwrap();
            let h = 1e-5;
            let (_, _, _, r_plus) = thrust_and_attitude(&accel(t + h), yaw(t + h), &p).unwrap();
            let (_, _, _, r_minus) = thrust_and_attitude(&accel(t - h), yaw(t - h), &p).unwrap();
            let r_dot_fd = (r_plus - r_minus) / (2.0 * h);
            let skew = Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0);
            let r_dot = r * skew;
            let err = (r_dot_fd - r_dot).norm();
            assert!(err <= 1e-4, "rotation rate mismatch {err} at t={t}");
        }
    }

    #[test]
    fn circular_trajectory_rates_bounded_and_periodic() {
        // Planar circle: accel = -w^2 radius * radial direction.
        let p = params();
        let (radius, omega) = (3.0, 0.8);
        let period = 2.0 * std::f64::consts::PI / omega;
        let accel = |t: f64| {
            Vector3::new(
                -radius * omega * omega * (omega * t).cos(),
                -radius * omega * omega * (omega * t).sin(),
                0.0,
            )
        };
        let jerk = |t: f64| {
            Vector3::new(
                radius * omega * omega * omega * (omega * t).sin(),
                -radius * omega * omega * omega * (omega * t).cos(),
                0.0,
            )
        };
        let rate_at = |t: f64| {
            let (u1, _, _, r) = thrust_and_attitude(&accel(t), 0.0, &p).unwrap();
            body_rates(&jerk(t), 0.0, 0.0, u1, &r, &p).unwrap()
        };
        let mut max_norm = 0.0_f64;
        for k in 0..50 {
            let t = period * k as f64 / 50.0;
            max_norm = max_norm.max(rate_at(t).norm());
        }
        assert!(max_norm < 2.0, "rates unexpectedly large: {max_norm}");
        let w0 = rate_at(0.37);
        let w1 = rate_at(0.37 + period);
        assert!((w0 - w1).norm() <= 1e-9, "rates not periodic");
    }

    #[test]
    fn moments_for_constant_rates_are_gyroscopic() {
        let mut p = params();
        p.inertia = [0.016, 0.02, 0.03];
        let w = Vector3::new(0.4, -0.2, 0.9);
        let series = vec![w; 10];
        let moments = body_moments(&series, &p, 1e-3).unwrap();
        let i_w = p.inertia_vector().component_mul(&w);
        let expected = w.cross(&i_w);
        for m in &moments {
            assert!((m - expected).norm() <= 1e-12);
        }
    }

    #[test]
    fn moments_vanish_at_rest() {
        let p = params();
        let series = vec![Vector3::zeros(); 5];
        let moments = body_moments(&series, &p, 1e-3).unwrap();
        assert!(moments.iter().all(|m| m.norm() == 0.0));
    }

    #[test]
    fn moments_match_analytic_oscillation() {
        let p = params();
        let dt = 1e-3;
        let count = 2000;
        let series: Vec<Vector3<f64>> = (0..count)
            .map(|k| Vector3::new((k as f64 * dt).sin(), 0.0, 0.0))
            .collect();
        let moments = body_moments(&series, &p, dt).unwrap();
        for k in 1..count - 1 {
            let t = k as f64 * dt;
            let w = Vector3::new(t.sin(), 0.0, 0.0);
            let w_dot = Vector3::new(t.cos(), 0.0, 0.0);
            let i_v = p.inertia_vector();
            let expected = i_v.component_mul(&w_dot) + w.cross(&i_v.component_mul(&w));
            assert!(
                (moments[k] - expected).norm() <= 1e-4,
                "moment mismatch at sample {k}"
            );
        }
    }

    #[test]
    fn moments_reject_short_series() {
        let p = params();
        assert!(body_moments(&[Vector3::zeros(); 2], &p, 1e-3).is_err());
    }
}
