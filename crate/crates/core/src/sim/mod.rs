//! Scenario simulation: ground truth, sensors, navigation runs and sweeps.

pub mod config;
pub mod runner;
pub mod sensors;
pub mod sweep;
pub mod trajectory;
pub mod truth;

use nalgebra::Vector3;

use crate::error::{NavError, Result};

pub use config::ScenarioConfig;
pub use runner::{monte_carlo, run_scenario, MonteCarloResult, RunMetrics, RunOptions, RunOutput, StepSizePolicy};
pub use sweep::{sweep_step_sizes, SweepResult, CANDIDATES, DEFAULT_BOUND};

/// Mean speed error norm between estimated and true velocities sampled on the same grid.
pub fn speed_error(est: &[Vector3<f64>], truth: &[Vector3<f64>]) -> Result<f64> {
    if est.len() != truth.len() || est.is_empty() {
        return Err(NavError::Validation(format!(
            "streams must be nonempty and aligned ({} vs {})",
            est.len(),
            truth.len()
        )));
    }
    let sum: f64 = est.iter().zip(truth).map(|(a, b)| (a - b).norm()).sum();
    Ok(sum / est.len() as f64)
}
