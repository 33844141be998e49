//! WGS-84 Earth geometry, normal gravity and frame rotation rates.
//!
//! Everything here is resolved in the local-level north-east-down frame. The
//! gravity model is Somigliana normal gravity with the second-order free-air
//! correction, positive down.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{NavError, Result};
use crate::strapdown::GeodeticPosition;

/// Ellipsoid and rotation constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarthParams {
    pub semi_major_axis: f64,
    pub eccentricity_sq: f64,
    pub flattening: f64,
    pub earth_rate: f64,
    /// Gravitational constant GM (m^3/s^2).
    pub gm: f64,
    /// Normal gravity at the equator (m/s^2).
    pub gravity_equator: f64,
    /// Somigliana's constant k.
    pub somigliana_k: f64,
}

pub const WGS84: EarthParams = EarthParams {
    semi_major_axis: 6_378_137.0,
    eccentricity_sq: 6.694_379_990_14e-3,
    flattening: 1.0 / 298.257_223_563,
    earth_rate: 7.292_115e-5,
    gm: 3.986_004_418e14,
    gravity_equator: 9.780_325_335_9,
    somigliana_k: 0.001_931_852_652_41,
};

impl Default for EarthParams {
    fn default() -> Self {
        WGS84
    }
}

impl EarthParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.semi_major_axis > 0.0) || !(0.0..1.0).contains(&self.eccentricity_sq) || !(self.earth_rate > 0.0) {
            return Err(NavError::InvalidConfig(format!("earth parameters out of range: {self:?}")));
        }
        Ok(())
    }
}

fn check_latitude(latitude: f64) -> Result<()> {
    if !latitude.is_finite() || latitude.abs() > std::f64::consts::FRAC_PI_2 {
        return Err(NavError::LatitudeOutOfRange(latitude));
    }
    Ok(())
}

/// Meridian and normal (prime vertical) radii of curvature `(R_M, R_N)`.
pub fn principal_radii(latitude: f64) -> Result<(f64, f64)> {
    check_latitude(latitude)?;
    Ok(principal_radii_unchecked(&WGS84, latitude))
}

#[inline]
pub(crate) fn principal_radii_unchecked(earth: &EarthParams, latitude: f64) -> (f64, f64) {
    let s = latitude.sin();
    let den = 1.0 - earth.eccentricity_sq * s * s;
    let sqrt_den = den.sqrt();
    let r_n = earth.semi_major_axis / sqrt_den;
    let r_m = earth.semi_major_axis * (1.0 - earth.eccentricity_sq) / (den * sqrt_den);
    (r_m, r_n)
}

/// Geometric mean radius `sqrt(R_M R_N)` used in the velocity-error dynamics.
pub fn mean_radius(latitude: f64) -> Result<f64> {
    let (r_m, r_n) = principal_radii(latitude)?;
    Ok((r_m * r_n).sqrt())
}

/// Normal gravity vector in NED (m/s^2).
pub fn gravity_ned(latitude: f64, altitude: f64) -> Result<Vector3<f64>> {
    check_latitude(latitude)?;
    Ok(gravity_ned_unchecked(&WGS84, latitude, altitude))
}

#[inline]
pub(crate) fn gravity_ned_unchecked(earth: &EarthParams, latitude: f64, altitude: f64) -> Vector3<f64> {
    let s2 = latitude.sin().powi(2);
    let g0 = earth.gravity_equator * (1.0 + earth.somigliana_k * s2) / (1.0 - earth.eccentricity_sq * s2).sqrt();
    let a = earth.semi_major_axis;
    let b = a * (1.0 - earth.flattening);
    let m = earth.earth_rate * earth.earth_rate * a * a * b / earth.gm;
    let f = earth.flattening;
    let scale = 1.0 - 2.0 / a * (1.0 + f + m - 2.0 * f * s2) * altitude + 3.0 / (a * a) * altitude * altitude;
    Vector3::new(0.0, 0.0, g0 * scale)
}

/// Earth rotation rate resolved in the navigation frame.
pub fn earth_rate_n(latitude: f64) -> Vector3<f64> {
    earth_rate_n_with(&WGS84, latitude)
}

#[inline]
pub(crate) fn earth_rate_n_with(earth: &EarthParams, latitude: f64) -> Vector3<f64> {
    let w = earth.earth_rate;
    Vector3::new(w * latitude.cos(), 0.0, -w * latitude.sin())
}

/// Transport rate of the navigation frame over the Earth, resolved in NED.
pub fn transport_rate_n(velocity: &Vector3<f64>, position: &GeodeticPosition) -> Result<Vector3<f64>> {
    check_latitude(position.latitude)?;
    if velocity[1] != 0.0 && is_polar(position.latitude) {
        return Err(NavError::SingularLatitude(position.latitude));
    }
    Ok(transport_rate_unchecked(&WGS84, velocity, position))
}

#[inline]
pub(crate) fn transport_rate_unchecked(
    earth: &EarthParams,
    velocity: &Vector3<f64>,
    position: &GeodeticPosition,
) -> Vector3<f64> {
    let (r_m, r_n) = principal_radii_unchecked(earth, position.latitude);
    let h = position.altitude;
    Vector3::new(velocity[1] / (r_n + h), -velocity[0] / (r_m + h), -velocity[1] * position.latitude.tan() / (r_n + h))
}

#[inline]
pub(crate) fn is_polar(latitude: f64) -> bool {
    (std::f64::consts::FRAC_PI_2 - latitude.abs()) < 1e-9
}
