//! Built-in scenarios mirroring the published simulation and experiment tables.

use crate::ekf::AidingKind;
use crate::sim::config::{ScenarioConfig, DEFAULT_TICK_S};
use crate::sim::trajectory::{PathShape, TrajectorySpec};

/// Closed loop of straight legs and fillets, about 700 m around.
pub fn curvy_loop() -> TrajectorySpec {
    TrajectorySpec::new(PathShape::WaypointSpline {
        waypoints: vec![[0.0, 0.0], [220.0, 0.0], [260.0, 120.0], [120.0, 230.0], [-30.0, 150.0]],
        corner_radius: 25.0,
        closed: true,
    })
}

/// Rounded rectangle at constant depth.
pub fn small_rectangle() -> TrajectorySpec {
    TrajectorySpec::new(PathShape::Rectangle { length: 12.0, width: 8.0, corner_radius: 2.0 })
}

fn base(aiding: AidingKind, trajectory: TrajectorySpec) -> ScenarioConfig {
    ScenarioConfig {
        aiding,
        gnss_vel_var: None,
        dvl_vel_var: None,
        aiding_vel_var_vertical: None,
        accel_var: 0.0,
        gyro_var: 0.0,
        accel_bias_rw_var: 0.0,
        gyro_bias_rw_var: 0.0,
        dt: 0.01,
        dtau: 1.0,
        duration_s: 240.0,
        v0: [5.0, 0.0, 0.0],
        p0: [32.0, 34.0, 5.0],
        seed: 1,
        mc_n: 100,
        tick_s: DEFAULT_TICK_S,
        joseph: false,
        v_thresh: None,
        trajectory,
    }
}

/// INS/GNSS step-size study scenario (240 s, 5 m/s).
pub fn sensitivity_gnss() -> ScenarioConfig {
    ScenarioConfig {
        gnss_vel_var: Some(0.004f64.powi(2)),
        accel_var: 0.02f64.powi(2),
        gyro_var: 0.002f64.powi(2),
        ..base(AidingKind::Gnss, curvy_loop())
    }
}

/// INS/GNSS adaptive-step scenario.
pub fn adaptive_gnss() -> ScenarioConfig {
    ScenarioConfig {
        gnss_vel_var: Some(0.02),
        accel_var: 0.04f64.powi(2),
        gyro_var: 0.003f64.powi(2),
        mc_n: 1,
        v_thresh: Some(5.0),
        ..base(AidingKind::Gnss, curvy_loop())
    }
}

/// INS/DVL adaptive-step scenario (40 s, 1 m/s, 5 m depth).
pub fn adaptive_dvl() -> ScenarioConfig {
    ScenarioConfig {
        dvl_vel_var: Some(0.004),
        accel_var: 0.02f64.powi(2),
        gyro_var: 0.002f64.powi(2),
        duration_s: 40.0,
        v0: [1.0, 0.0, 0.0],
        p0: [32.0, 34.0, -5.0],
        mc_n: 1,
        v_thresh: Some(1.0),
        ..base(AidingKind::Dvl, small_rectangle())
    }
}

/// Field-experiment shaped scenario: figure-eight from rest, 10 Hz GNSS,
/// separate vertical aiding variance and nonzero bias random walks.
pub fn field_gnss() -> ScenarioConfig {
    let g: f64 = 9.80665;
    let mut trajectory = TrajectorySpec::new(PathShape::FigureEight { radius: 15.0 });
    trajectory.speed_amplitude = 3.0;
    trajectory.speed_period = 35.0;
    ScenarioConfig {
        gnss_vel_var: Some(0.003),
        aiding_vel_var_vertical: Some(0.005),
        accel_var: (300e-6 * g).powi(2),
        gyro_var: 0.01f64.to_radians().powi(2),
        accel_bias_rw_var: 1.0,
        gyro_bias_rw_var: 1.0,
        dt: 0.02,
        dtau: 0.1,
        duration_s: 35.0,
        v0: [0.0, 0.0, 0.0],
        p0: [32.1, 34.8, 0.0],
        mc_n: 1,
        v_thresh: Some(7.0),
        ..base(AidingKind::Gnss, trajectory)
    }
}

/// Named preset lookup used by the CLI.
pub fn by_name(name: &str) -> Option<ScenarioConfig> {
    match name {
        "sensitivity_gnss" => Some(sensitivity_gnss()),
        "adaptive_gnss" => Some(adaptive_gnss()),
        "adaptive_dvl" => Some(adaptive_dvl()),
        "field_gnss" => Some(field_gnss()),
        _ => None,
    }
}

pub const NAMES: [&str; 4] = ["sensitivity_gnss", "adaptive_gnss", "adaptive_dvl", "field_gnss"];
