//! Step-size sweep and sub-optimal step selection under an error bound.

use serde::{Deserialize, Serialize};

use crate::error::{NavError, Result};

use super::config::ScenarioConfig;
use super::runner::{ground_truth, monte_carlo_with_truth, StepSizePolicy};

/// Candidate mechanization steps (s).
pub const CANDIDATES: [f64; 10] = [0.002, 0.004, 0.008, 0.01, 0.016, 0.02, 0.032, 0.04, 0.05, 0.1];

/// Default bound on the mean speed error (m/s).
pub const DEFAULT_BOUND: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub dt_s: f64,
    pub mean_speed_error_mps: f64,
    pub rms_speed_error_mps: f64,
    pub iterations: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub bound_mps: f64,
    pub selected_dt_s: f64,
    /// No candidate met the bound; the smallest candidate was returned.
    pub out_of_bound: bool,
}

/// Largest step whose error stays within `bound`; if none does, the smallest
/// step with the out-of-bound flag set.
pub fn select_step(errors: &[(f64, f64)], bound: f64) -> Result<(f64, bool)> {
    if errors.is_empty() {
        return Err(NavError::InvalidConfig("no candidate step sizes".into()));
    }
    let best = errors
        .iter()
        .filter(|(_, e)| *e <= bound)
        .map(|(dt, _)| *dt)
        .fold(None, |acc: Option<f64>, dt| Some(acc.map_or(dt, |a| a.max(dt))));
    Ok(match best {
        Some(dt) => (dt, false),
        None => (errors.iter().map(|(dt, _)| *dt).fold(f64::INFINITY, f64::min), true),
    })
}

/// Monte-Carlo error for each candidate step and the selected step.
pub fn sweep_step_sizes(config: &ScenarioConfig, candidates: &[f64], bound: f64, mc_n: usize) -> Result<SweepResult> {
    if !(bound > 0.0) {
        return Err(NavError::InvalidConfig(format!("bound must be positive, got {bound}")));
    }
    let gt = ground_truth(config)?;
    let mut rows = Vec::with_capacity(candidates.len());
    for &dt in candidates {
        let mut c = config.clone();
        c.dt = dt;
        let mc = monte_carlo_with_truth(&c, gt.clone(), &StepSizePolicy::Fixed(dt), mc_n)?;
        rows.push(SweepRow {
            dt_s: dt,
            mean_speed_error_mps: mc.mean.mean_speed_error_mps,
            rms_speed_error_mps: mc.mean.rms_speed_error_mps,
            iterations: mc.mean.iterations,
        });
    }
    let pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r.dt_s, r.mean_speed_error_mps)).collect();
    let (selected_dt_s, out_of_bound) = select_step(&pairs, bound)?;
    Ok(SweepResult { rows, bound_mps: bound, selected_dt_s, out_of_bound })
}
