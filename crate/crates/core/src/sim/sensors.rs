//! Additive white-noise models for the IMU and the aiding sensor.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::ekf::{AidingKind, AidingMeasurement, MeasurementNoiseConfig, ProcessNoiseConfig};
use crate::strapdown::ImuSample;

use super::truth::GroundTruth;

/// Stream tags for [`derive_seed`].
pub const STREAM_IMU: u64 = 1;
pub const STREAM_AIDING: u64 = 2;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based seed for run `run`, stream `stream` under `master`.
///
/// Depends only on its arguments, so Monte-Carlo runs can execute in any order.
pub fn derive_seed(master: u64, run: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ run) ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

fn normal3(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    Vector3::new(StandardNormal.sample(rng), StandardNormal.sample(rng), StandardNormal.sample(rng))
}

/// Per-sample Gaussian IMU noise, independent of the step length.
#[derive(Debug, Clone)]
pub struct ImuNoise {
    accel_std: f64,
    gyro_std: f64,
    rng: ChaCha8Rng,
}

impl ImuNoise {
    pub fn new(noise: &ProcessNoiseConfig, seed: u64) -> Self {
        Self {
            accel_std: noise.accel_var.sqrt(),
            gyro_std: noise.gyro_var.sqrt(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn corrupt(&mut self, imu: &ImuSample) -> ImuSample {
        let wa = normal3(&mut self.rng) * self.accel_std;
        let wg = normal3(&mut self.rng) * self.gyro_std;
        ImuSample { time: imu.time, specific_force: imu.specific_force + wa, angular_rate: imu.angular_rate + wg }
    }
}

/// Noisy IMU stream at a fixed step of `step_ticks` ground-truth ticks.
pub fn synth_imu(gt: &GroundTruth, step_ticks: usize, noise: &ProcessNoiseConfig, seed: u64) -> Vec<ImuSample> {
    let mut gen = ImuNoise::new(noise, seed);
    (0..gt.n_ticks() / step_ticks.max(1)).map(|k| gen.corrupt(&gt.exact_imu(k * step_ticks, step_ticks))).collect()
}

/// Aiding velocity generator: navigation-frame velocity for GNSS, body-frame
/// velocity for DVL (instrument frame aligned with the body).
#[derive(Debug, Clone)]
pub struct AidingSynth {
    kind: AidingKind,
    std: Vector3<f64>,
    rng: ChaCha8Rng,
}

impl AidingSynth {
    pub fn new(kind: AidingKind, noise: &MeasurementNoiseConfig, seed: u64) -> Self {
        Self { kind, std: Vector3::from(noise.variance).map(f64::sqrt), rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn measure(&mut self, gt: &GroundTruth, tick: usize) -> AidingMeasurement {
        let v = gt.velocity[tick];
        let clean = match self.kind {
            AidingKind::Gnss => v,
            AidingKind::Dvl => gt.attitude(tick).nav_to_body() * v,
        };
        let noise = normal3(&mut self.rng).component_mul(&self.std);
        AidingMeasurement { time: tick as f64 * gt.tick_s, kind: self.kind, velocity: clean + noise }
    }
}

/// Aiding measurements at every multiple of `dtau_ticks` after the start.
pub fn synth_aiding(
    gt: &GroundTruth,
    kind: AidingKind,
    noise: &MeasurementNoiseConfig,
    dtau_ticks: usize,
    seed: u64,
) -> Vec<AidingMeasurement> {
    let mut gen = AidingSynth::new(kind, noise, seed);
    (1..=gt.n_ticks() / dtau_ticks.max(1)).map(|j| gen.measure(gt, j * dtau_ticks)).collect()
}
