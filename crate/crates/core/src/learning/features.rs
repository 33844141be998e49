//! Sixteen-element feature vector: ten high-level quantities (noise levels,
//! aiding interval, windowed second moments of the estimated velocity and
//! attitude) and six low-level combinations of the noise settings and speed.

use std::collections::VecDeque;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{NavError, Result};
use crate::strapdown::EulerAngles;

pub const N_FEATURES: usize = 16;

/// Default moving-average window length in samples.
pub const WINDOW_LEN: usize = 50;

/// Variance floor used when a noise variance is zero.
pub const VAR_FLOOR: f64 = 1e-12;

pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "x_hi_1", "x_hi_2", "x_hi_3", "x_hi_4", "x_hi_5", "x_hi_6", "x_hi_7", "x_hi_8", "x_hi_9", "x_hi_10", "x_lo_1",
    "x_lo_2", "x_lo_3", "x_lo_4", "x_lo_5", "x_lo_6",
];

/// Noise settings and aiding interval the features are computed against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureContext {
    pub gyro_var: f64,
    pub accel_var: f64,
    pub aiding_var: f64,
    pub dtau: f64,
}

/// Estimated velocity and attitude after one mechanization step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NavSample {
    pub velocity: Vector3<f64>,
    pub euler: EulerAngles,
}

/// Most recent samples, oldest first, bounded by a fixed capacity.
#[derive(Debug, Clone)]
pub struct FeatureWindow {
    cap: usize,
    buf: VecDeque<NavSample>,
}

impl FeatureWindow {
    pub fn new(cap: usize) -> Self {
        Self { cap: cap.max(1), buf: VecDeque::with_capacity(cap.max(1)) }
    }

    pub fn push(&mut self, s: NavSample) {
        if self.buf.len() == self.cap {
            self.buf.pop_front();
        }
        self.buf.push_back(s);
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.buf.len() == self.cap
    }

    pub fn samples(&self) -> impl Iterator<Item = &NavSample> {
        self.buf.iter()
    }

    pub fn latest(&self) -> Option<&NavSample> {
        self.buf.back()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: [f64; N_FEATURES],
    /// Fewer samples than the window length were available.
    pub warm_up: bool,
    /// A zero variance was floored before inversion.
    pub floored: bool,
}

/// Compute the feature vector from a sample window and the noise context.
pub fn extract_features(window: &FeatureWindow, ctx: &FeatureContext) -> Result<FeatureVector> {
    let latest = window.latest().ok_or_else(|| NavError::Validation("feature window is empty".into()))?;
    for (name, v) in
        [("gyro_var", ctx.gyro_var), ("accel_var", ctx.accel_var), ("aiding_var", ctx.aiding_var), ("dtau", ctx.dtau)]
    {
        if !v.is_finite() || v < 0.0 {
            return Err(NavError::Validation(format!("{name} must be finite and non-negative, got {v}")));
        }
    }
    let n = window.len() as f64;
    let mut m = [0.0; 6];
    for s in window.samples() {
        let e = [s.velocity[0], s.velocity[1], s.velocity[2], s.euler.roll, s.euler.pitch, s.euler.yaw];
        for (acc, x) in m.iter_mut().zip(e) {
            *acc += x * x;
        }
    }
    for acc in &mut m {
        *acc /= n;
    }

    let (qg, qa, r) = (ctx.gyro_var, ctx.accel_var, ctx.aiding_var);
    let floored = qg < VAR_FLOOR || qa < VAR_FLOOR || r < VAR_FLOOR;
    let inv = 1.0 / qg.max(VAR_FLOOR) + 1.0 / qa.max(VAR_FLOOR) + 1.0 / r.max(VAR_FLOOR);
    let x1 = (qg + qa + r).sqrt();
    let x2 = inv.sqrt();
    let x3 = (qg.sqrt() + qa.sqrt()) / r.max(VAR_FLOOR).sqrt();
    let x4 = r * ctx.dtau;
    let x5 = latest.velocity.norm();
    let x6 = x3 * x5;

    let values = [qg.sqrt(), qa.sqrt(), r.sqrt(), ctx.dtau, m[0], m[1], m[2], m[3], m[4], m[5], x1, x2, x3, x4, x5, x6];
    if values.iter().any(|v| !v.is_finite()) {
        return Err(NavError::Validation(format!("non-finite feature in {values:?}")));
    }
    Ok(FeatureVector { values, warm_up: !window.is_full(), floored })
}
