//! Ground-truth trajectories on a fine time grid and the exact IMU outputs
//! that reproduce them under the mechanization equations.

use nalgebra::{Rotation3, Vector3};

use crate::earth::{self, WGS84};
use crate::error::{NavError, Result};
use crate::strapdown::{wrap_pi, BodyToNavDcm, EulerAngles, GeodeticPosition, ImuSample, NavState};

use super::trajectory::{build_path, speed_profile, validate_spec, TrajectorySpec};

/// Ground truth sampled every `tick_s` seconds, `n_ticks + 1` samples.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub tick_s: f64,
    pub position: Vec<GeodeticPosition>,
    pub velocity: Vec<Vector3<f64>>,
    pub euler: Vec<EulerAngles>,
}

impl GroundTruth {
    pub fn n_ticks(&self) -> usize {
        self.position.len() - 1
    }

    pub fn duration(&self) -> f64 {
        self.n_ticks() as f64 * self.tick_s
    }

    pub fn attitude(&self, i: usize) -> BodyToNavDcm {
        BodyToNavDcm::from_euler(&self.euler[i])
    }

    pub fn state(&self, i: usize) -> NavState {
        NavState::new(self.position[i], self.velocity[i], self.attitude(i))
    }

    /// Error-free IMU sample for one mechanization step from tick `i` to `i + m`.
    ///
    /// Mechanizing the returned sample from the true state at `i` with a step
    /// of `m` ticks lands on the true velocity and attitude at `i + m`.
    pub fn exact_imu(&self, i: usize, m: usize) -> ImuSample {
        let j = i + m;
        let dt = m as f64 * self.tick_s;
        let p = &self.position[i];
        let v = &self.velocity[i];
        let t_i = self.attitude(i);
        let t_j = self.attitude(j);

        let w_ie = earth::earth_rate_n_with(&WGS84, p.latitude);
        let w_en = earth::transport_rate_unchecked(&WGS84, v, p);
        let g = earth::gravity_ned_unchecked(&WGS84, p.latitude, p.altitude);
        let accel_n = (self.velocity[j] - v) / dt;
        let f_n = accel_n - g + (w_en + 2.0 * w_ie).cross(v);
        let specific_force = t_i.nav_to_body() * f_n;

        // the orthonormalized Euler step rotates by atan(|u| dt) about u
        let rel = Rotation3::from_matrix_unchecked(t_i.nav_to_body() * t_j.matrix());
        let axis_angle = rel.scaled_axis();
        let theta = axis_angle.norm();
        let u = if theta > 0.0 { axis_angle * (theta.tan() / (theta * dt)) } else { Vector3::zeros() };
        let angular_rate = u + t_i.nav_to_body() * (w_ie + w_en);
        ImuSample { time: j as f64 * self.tick_s, specific_force, angular_rate }
    }
}

/// Inputs that pin down a ground-truth trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthSpec {
    pub trajectory: TrajectorySpec,
    /// Initial NED velocity; its horizontal direction fixes the initial heading.
    pub v0: [f64; 3],
    /// Initial position in degrees, degrees, metres.
    pub p0: [f64; 3],
    pub duration_s: f64,
    pub tick_s: f64,
}

/// Level-flight ground truth: roll and pitch are zero and yaw follows the path heading.
pub fn gen_trajectory(spec: &TruthSpec) -> Result<GroundTruth> {
    if !(spec.duration_s > 0.0) || !(spec.tick_s > 0.0) {
        return Err(NavError::Validation(format!(
            "duration and tick must be positive (duration {}, tick {})",
            spec.duration_s, spec.tick_s
        )));
    }
    if spec.v0[2] != 0.0 {
        return Err(NavError::Validation("trajectories are level; initial down velocity must be zero".into()));
    }
    let v0 = (spec.v0[0].powi(2) + spec.v0[1].powi(2)).sqrt();
    validate_spec(&spec.trajectory, v0)?;
    let heading0 = if v0 > 0.0 { spec.v0[1].atan2(spec.v0[0]) } else { 0.0 };
    let path = build_path(&spec.trajectory.shape, heading0)?;
    let p0 = GeodeticPosition::from_degrees(spec.p0[0], spec.p0[1], spec.p0[2]);
    p0.validate()?;

    let n = (spec.duration_s / spec.tick_s).round() as usize;
    let mut position = Vec::with_capacity(n + 1);
    let mut velocity = Vec::with_capacity(n + 1);
    let mut euler = Vec::with_capacity(n + 1);
    let mut p = p0;
    for i in 0..=n {
        let t = i as f64 * spec.tick_s;
        let (speed, s) = speed_profile(&spec.trajectory, v0, t);
        let yaw = path.heading(s);
        let v = Vector3::new(speed * yaw.cos(), speed * yaw.sin(), 0.0);
        position.push(p);
        velocity.push(v);
        euler.push(EulerAngles::new(0.0, 0.0, wrap_pi(yaw)));
        let rate = crate::strapdown::position_rate(&p, &v)?;
        p = GeodeticPosition {
            latitude: p.latitude + rate[0] * spec.tick_s,
            longitude: wrap_pi(p.longitude + rate[1] * spec.tick_s),
            altitude: p.altitude + rate[2] * spec.tick_s,
        };
    }
    Ok(GroundTruth { tick_s: spec.tick_s, position, velocity, euler })
}
