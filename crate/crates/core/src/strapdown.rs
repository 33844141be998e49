//! Strapdown INS mechanization in the local-level NED frame.
//!
//! All rates are integrated with a single forward-Euler step so that the
//! mechanization shares the first-order discretization of the error-state
//! transition matrix. The body-to-navigation DCM is re-orthonormalized after
//! every step by symmetric orthogonalization, `T (T^T T)^(-1/2)`.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::earth::{self, WGS84};
use crate::error::{NavError, Result};

/// NED velocity in m/s.
pub type VelocityNed = Vector3<f64>;

/// Maximum tolerated `||T^T T - I||_F` for a valid attitude.
pub const ORTHONORMALITY_TOL: f64 = 1e-9;

/// Geodetic position: latitude and longitude in radians, altitude in metres (up).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeodeticPosition {
    pub latitude: f64,
    pub longitude: f64,
    pub altitude: f64,
}

impl GeodeticPosition {
    pub fn new(latitude: f64, longitude: f64, altitude: f64) -> Self {
        Self { latitude, longitude, altitude }
    }

    pub fn from_degrees(lat_deg: f64, lon_deg: f64, altitude: f64) -> Self {
        Self::new(lat_deg.to_radians(), wrap_pi(lon_deg.to_radians()), altitude)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.latitude.is_finite() || self.latitude.abs() > FRAC_PI_2 {
            return Err(NavError::LatitudeOutOfRange(self.latitude));
        }
        if !self.longitude.is_finite() || !self.altitude.is_finite() {
            return Err(NavError::Validation(format!("non-finite position {self:?}")));
        }
        Ok(())
    }
}

/// Wrap an angle to (-pi, pi].
pub fn wrap_pi(angle: f64) -> f64 {
    let mut a = angle % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Roll, pitch, yaw (3-2-1 aerospace sequence), radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EulerAngles {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl EulerAngles {
    pub fn new(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self { roll, pitch, yaw }
    }
}

/// Body-to-navigation direction cosine matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyToNavDcm(Matrix3<f64>);

impl BodyToNavDcm {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Wrap a matrix, checking orthonormality and handedness.
    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        let err = orthonormality_error(&m);
        if err > ORTHONORMALITY_TOL || (m.determinant() - 1.0).abs() > ORTHONORMALITY_TOL {
            return Err(NavError::Validation(format!(
                "matrix is not a proper rotation (orthonormality error {err:.3e})"
            )));
        }
        Ok(Self(m))
    }

    /// Project an arbitrary near-rotation onto the closest rotation.
    pub fn orthonormalized(m: Matrix3<f64>) -> Self {
        Self(orthonormalize(&m))
    }

    /// Rotation `Rz(yaw) Ry(pitch) Rx(roll)`.
    pub fn from_euler(e: &EulerAngles) -> Self {
        let (sr, cr) = e.roll.sin_cos();
        let (sp, cp) = e.pitch.sin_cos();
        let (sy, cy) = e.yaw.sin_cos();
        Self(Matrix3::new(
            cy * cp,
            cy * sp * sr - sy * cr,
            cy * sp * cr + sy * sr,
            sy * cp,
            sy * sp * sr + cy * cr,
            sy * sp * cr - cy * sr,
            -sp,
            cp * sr,
            cp * cr,
        ))
    }

    #[inline]
    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// Navigation-to-body rotation.
    #[inline]
    pub fn nav_to_body(&self) -> Matrix3<f64> {
        self.0.transpose()
    }

    pub fn orthonormality_error(&self) -> f64 {
        orthonormality_error(&self.0)
    }
}

/// `||T^T T - I||_F`
pub fn orthonormality_error(m: &Matrix3<f64>) -> f64 {
    (m.transpose() * m - Matrix3::identity()).norm()
}

/// Closest rotation in the Frobenius sense (polar factor).
///
/// Newton-Schulz iteration converges quadratically from a near-orthonormal
/// start; anything further out goes through an SVD.
pub fn orthonormalize(m: &Matrix3<f64>) -> Matrix3<f64> {
    let mut x = *m;
    if orthonormality_error(&x) < 0.5 {
        for _ in 0..12 {
            let xtx = x.transpose() * x;
            let err = (xtx - Matrix3::identity()).norm();
            if err <= 1e-15 {
                break;
            }
            x = 0.5 * x * (3.0 * Matrix3::identity() - xtx);
        }
        return x;
    }
    let svd = m.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * v_t;
    }
    r
}

/// Skew-symmetric cross-product matrix, `skew(a) b = a x b`.
#[inline]
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v[2], v[1], v[2], 0.0, -v[0], -v[1], v[0], 0.0)
}

/// Tolerance on |pitch| - pi/2 for reporting gimbal lock.
pub const GIMBAL_LOCK_TOL: f64 = 1e-6;

/// 3-2-1 Euler angles from a body-to-navigation DCM.
///
/// Returns the angles and a gimbal-lock flag. At gimbal lock the yaw is set
/// to zero and the whole heading is attributed to roll.
pub fn euler_from_dcm(t: &BodyToNavDcm) -> (EulerAngles, bool) {
    let m = t.matrix();
    let pitch = -m[(2, 0)].clamp(-1.0, 1.0).asin();
    if (pitch.abs() - FRAC_PI_2).abs() < GIMBAL_LOCK_TOL {
        let s = pitch.signum();
        let roll = (s * m[(0, 1)]).atan2(m[(1, 1)]);
        return (EulerAngles::new(roll, pitch, 0.0), true);
    }
    let roll = m[(2, 1)].atan2(m[(2, 2)]);
    let yaw = m[(1, 0)].atan2(m[(0, 0)]);
    (EulerAngles::new(roll, pitch, yaw), false)
}

/// One IMU sample: specific force (m/s^2) and angular rate (rad/s) in body axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub time: f64,
    pub specific_force: Vector3<f64>,
    pub angular_rate: Vector3<f64>,
}

/// Full navigation solution plus running IMU bias estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NavState {
    pub position: GeodeticPosition,
    pub velocity: VelocityNed,
    pub attitude: BodyToNavDcm,
    pub accel_bias: Vector3<f64>,
    pub gyro_bias: Vector3<f64>,
}

impl NavState {
    pub fn new(position: GeodeticPosition, velocity: VelocityNed, attitude: BodyToNavDcm) -> Self {
        Self { position, velocity, attitude, accel_bias: Vector3::zeros(), gyro_bias: Vector3::zeros() }
    }

    pub fn euler(&self) -> EulerAngles {
        euler_from_dcm(&self.attitude).0
    }

    pub fn speed(&self) -> f64 {
        self.velocity.norm()
    }
}

fn check_non_polar(latitude: f64) -> Result<()> {
    if !latitude.is_finite() || latitude.abs() > FRAC_PI_2 {
        return Err(NavError::LatitudeOutOfRange(latitude));
    }
    if earth::is_polar(latitude) {
        return Err(NavError::SingularLatitude(latitude));
    }
    Ok(())
}

/// Time derivative of (latitude, longitude, altitude).
pub fn position_rate(position: &GeodeticPosition, velocity: &VelocityNed) -> Result<Vector3<f64>> {
    check_non_polar(position.latitude)?;
    Ok(position_rate_unchecked(position, velocity))
}

#[inline]
fn position_rate_unchecked(position: &GeodeticPosition, velocity: &VelocityNed) -> Vector3<f64> {
    let (r_m, r_n) = earth::principal_radii_unchecked(&WGS84, position.latitude);
    let h = position.altitude;
    Vector3::new(velocity[0] / (r_m + h), velocity[1] / (position.latitude.cos() * (r_n + h)), -velocity[2])
}

/// Angular rate of the navigation frame relative to inertial space, in NED.
pub fn nav_frame_rate(position: &GeodeticPosition, velocity: &VelocityNed) -> Result<Vector3<f64>> {
    check_non_polar(position.latitude)?;
    Ok(earth::earth_rate_n_with(&WGS84, position.latitude)
        + earth::transport_rate_unchecked(&WGS84, velocity, position))
}

/// Time derivative of the NED velocity for a body-frame specific force.
pub fn velocity_rate(state: &NavState, specific_force_b: &Vector3<f64>) -> Result<VelocityNed> {
    check_non_polar(state.position.latitude)?;
    Ok(velocity_rate_unchecked(state, specific_force_b))
}

#[inline]
fn velocity_rate_unchecked(state: &NavState, f_b: &Vector3<f64>) -> VelocityNed {
    let p = &state.position;
    let v = &state.velocity;
    let w_ie = earth::earth_rate_n_with(&WGS84, p.latitude);
    let w_en = earth::transport_rate_unchecked(&WGS84, v, p);
    let g = earth::gravity_ned_unchecked(&WGS84, p.latitude, p.altitude);
    state.attitude.matrix() * f_b + g - (w_en + 2.0 * w_ie).cross(v)
}

/// Euler step of the DCM kinematics followed by re-orthonormalization.
///
/// `angular_rate_b` is the body rate w.r.t. inertial space; `nav_rate_n` is
/// the navigation-frame rate w.r.t. inertial space, resolved in NED.
pub fn attitude_step(
    t: &BodyToNavDcm,
    angular_rate_b: &Vector3<f64>,
    nav_rate_n: &Vector3<f64>,
    dt: f64,
) -> BodyToNavDcm {
    let m = t.matrix();
    let nav_rate_b = m.transpose() * nav_rate_n;
    let rel = angular_rate_b - nav_rate_b;
    if dt == 0.0 || rel == Vector3::zeros() {
        return *t;
    }
    let stepped = m + m * skew(&rel) * dt;
    BodyToNavDcm(orthonormalize(&stepped))
}

/// Advance a navigation state by one IMU sample over `dt` seconds.
///
/// The running bias estimates are removed from the raw sample first.
pub fn propagate_nav(state: &NavState, imu: &ImuSample, dt: f64) -> Result<NavState> {
    if !(dt > 0.0) {
        return Err(NavError::Validation(format!("step size must be positive, got {dt}")));
    }
    check_non_polar(state.position.latitude)?;
    let f_b = imu.specific_force - state.accel_bias;
    let w_b = imu.angular_rate - state.gyro_bias;

    let p = &state.position;
    let v = &state.velocity;
    let p_dot = position_rate_unchecked(p, v);
    let v_dot = velocity_rate_unchecked(state, &f_b);
    let w_in = earth::earth_rate_n_with(&WGS84, p.latitude) + earth::transport_rate_unchecked(&WGS84, v, p);
    let attitude = attitude_step(&state.attitude, &w_b, &w_in, dt);

    let position = GeodeticPosition {
        latitude: p.latitude + p_dot[0] * dt,
        longitude: wrap_pi(p.longitude + p_dot[1] * dt),
        altitude: p.altitude + p_dot[2] * dt,
    };
    Ok(NavState {
        position,
        velocity: v + v_dot * dt,
        attitude,
        accel_bias: state.accel_bias,
        gyro_bias: state.gyro_bias,
    })
}
