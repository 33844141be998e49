//! The closed-loop navigation run: propagate, aid, measure against truth.

use std::sync::Arc;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adaptive::{AdaptivePolicyState, LearnedPolicy, TimelineSegment};
use crate::ekf::{AidingMeasurement, ErrorStateEkf, FilterConfig, HealthReport};
use crate::error::{NavError, Result};
use crate::learning::baseline_policy;
use crate::learning::features::{extract_features, FeatureContext, FeatureVector, FeatureWindow, NavSample};
use crate::strapdown::{propagate_nav, ImuSample, NavState};

use super::config::{to_ticks, ScenarioConfig};
use super::sensors::{derive_seed, AidingSynth, ImuNoise, STREAM_AIDING, STREAM_IMU};
use super::truth::{gen_trajectory, GroundTruth};

/// How the mechanization step is chosen during a run.
#[derive(Debug, Clone)]
pub enum StepSizePolicy {
    Fixed(f64),
    /// Speed-threshold rule: fine step above `v_thresh`, coarse step otherwise.
    SpeedThreshold {
        v_thresh: f64,
        dt_min: f64,
        dt_max: f64,
    },
    Learned(LearnedPolicy),
}

impl StepSizePolicy {
    pub fn label(&self) -> String {
        match self {
            StepSizePolicy::Fixed(dt) => format!("fixed:{dt}"),
            StepSizePolicy::SpeedThreshold { v_thresh, .. } => format!("speed:{v_thresh}"),
            StepSizePolicy::Learned(_) => "learned".to_string(),
        }
    }
}

/// Per-run accuracy and cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub policy: String,
    /// Time-weighted mean of the speed error norm (m/s).
    pub mean_speed_error_mps: f64,
    pub max_speed_error_mps: f64,
    /// Root of the time-weighted mean squared speed error (m/s).
    pub rms_speed_error_mps: f64,
    /// Number of mechanization steps.
    pub iterations: f64,
    pub duration_s: f64,
}

/// One row of the per-step filter trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub time_s: f64,
    pub step_size_s: f64,
    pub speed_error_mps: f64,
    #[serde(rename = "P_trace_vel")]
    pub p_trace_vel: f64,
    pub updated: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: RunMetrics,
    pub trace: Vec<TraceRow>,
    pub timeline: Vec<TimelineSegment>,
    pub health: HealthReport,
    /// Set when the filter diverged; metrics then cover the run up to that point.
    pub diverged: Option<String>,
    pub switches: usize,
    /// Feature vectors computed after each aiding update, when requested.
    pub features: Vec<FeatureVector>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub record_trace: bool,
    pub check_health: bool,
    /// Window length for per-update feature vectors; `None` skips them.
    pub feature_window: Option<usize>,
}

/// Supplies inputs to the navigation loop on an integer tick grid.
pub trait NavSource {
    fn tick_s(&self) -> f64;
    fn n_ticks(&self) -> usize;
    fn initial_state(&self) -> NavState;
    /// IMU sample driving the step from `tick` to `tick + m`.
    fn imu(&mut self, tick: usize, m: usize) -> Result<ImuSample>;
    /// Aiding measurement available at `tick`, if any.
    fn aiding(&mut self, tick: usize) -> Result<Option<AidingMeasurement>>;
    fn true_velocity(&self, tick: usize) -> Vector3<f64>;
}

/// Simulated sensors over a shared ground truth.
pub struct SimSource {
    gt: Arc<GroundTruth>,
    imu_noise: ImuNoise,
    aiding: AidingSynth,
}

impl SimSource {
    pub fn new(config: &ScenarioConfig, gt: Arc<GroundTruth>, run: u64) -> Result<Self> {
        Ok(Self {
            imu_noise: ImuNoise::new(&config.process_noise(), derive_seed(config.seed, run, STREAM_IMU)),
            aiding: AidingSynth::new(
                config.aiding,
                &config.measurement_noise()?,
                derive_seed(config.seed, run, STREAM_AIDING),
            ),
            gt,
        })
    }
}

impl NavSource for SimSource {
    fn tick_s(&self) -> f64 {
        self.gt.tick_s
    }

    fn n_ticks(&self) -> usize {
        self.gt.n_ticks()
    }

    fn initial_state(&self) -> NavState {
        self.gt.state(0)
    }

    fn imu(&mut self, tick: usize, m: usize) -> Result<ImuSample> {
        Ok(self.imu_noise.corrupt(&self.gt.exact_imu(tick, m)))
    }

    fn aiding(&mut self, tick: usize) -> Result<Option<AidingMeasurement>> {
        Ok(Some(self.aiding.measure(&self.gt, tick)))
    }

    fn true_velocity(&self, tick: usize) -> Vector3<f64> {
        self.gt.velocity[tick]
    }
}

enum Controller {
    Fixed(usize),
    Speed { v_thresh: f64, min: usize, max: usize, current: usize },
    Learned(Box<AdaptivePolicyState>),
}

impl Controller {
    fn new(
        policy: &StepSizePolicy,
        ctx: FeatureContext,
        tick: f64,
        dtau_ticks: usize,
        initial: &NavState,
    ) -> Result<Self> {
        Ok(match policy {
            StepSizePolicy::Fixed(dt) => Controller::Fixed(to_ticks(*dt, tick)?),
            StepSizePolicy::SpeedThreshold { v_thresh, dt_min, dt_max } => {
                let min = to_ticks(*dt_min, tick)?;
                let max = to_ticks(*dt_max, tick)?;
                let current = baseline_policy(initial.speed(), *v_thresh, min as f64, max as f64) as usize;
                Controller::Speed { v_thresh: *v_thresh, min, max, current }
            }
            StepSizePolicy::Learned(p) => {
                Controller::Learned(Box::new(AdaptivePolicyState::new(p, ctx, tick, dtau_ticks)?))
            }
        })
    }

    fn current(&self) -> usize {
        match self {
            Controller::Fixed(m) => *m,
            Controller::Speed { current, .. } => *current,
            Controller::Learned(s) => s.current_ticks(),
        }
    }

    fn after_step(&mut self, tick: usize, prev_tick: usize, state: &NavState, tick_s: f64) {
        match self {
            Controller::Fixed(_) => {}
            Controller::Speed { v_thresh, min, max, current } => {
                let dt = baseline_policy(state.speed(), *v_thresh, *min as f64, *max as f64);
                *current = dt as usize;
            }
            Controller::Learned(s) => s.observe(tick, prev_tick, state, tick_s),
        }
    }

    fn switches(&self) -> usize {
        match self {
            Controller::Learned(s) => s.switches(),
            _ => 0,
        }
    }
}

/// Feature context for the learned policy from a scenario's noise settings.
pub fn feature_context(config: &ScenarioConfig) -> Result<FeatureContext> {
    Ok(FeatureContext {
        gyro_var: config.gyro_var,
        accel_var: config.accel_var,
        aiding_var: config.aiding_var()?,
        dtau: config.dtau,
    })
}

/// Run the navigation loop over `source`.
///
/// Steps are shortened where needed so that every aiding epoch and the end
/// of the run fall on a step boundary.
pub fn navigate(
    source: &mut dyn NavSource,
    filter: FilterConfig,
    policy: &StepSizePolicy,
    ctx: FeatureContext,
    dtau_ticks: usize,
    options: RunOptions,
) -> Result<RunOutput> {
    let tick_s = source.tick_s();
    let n = source.n_ticks();
    if dtau_ticks == 0 || n == 0 {
        return Err(NavError::InvalidConfig("empty run or zero aiding interval".into()));
    }
    let mut state = source.initial_state();
    let mut controller = Controller::new(policy, ctx, tick_s, dtau_ticks, &state)?;
    let mut ekf = ErrorStateEkf::new(filter, &state.attitude, controller.current() as f64 * tick_s)?;

    let mut health = HealthReport::default();
    let mut trace = Vec::new();
    let mut timeline: Vec<TimelineSegment> = Vec::new();
    let (mut sum, mut sum_sq, mut max, mut weight) = (0.0, 0.0, 0.0f64, 0.0);
    let mut iterations = 0usize;
    let mut diverged = None;
    let mut k = 0usize;
    let mut window = options.feature_window.map(FeatureWindow::new);
    let mut features = Vec::new();

    while k < n {
        let nominal = controller.current();
        let next_aid = (k / dtau_ticks + 1) * dtau_ticks;
        let m = nominal.min(next_aid - k).min(n - k);
        let dt = m as f64 * tick_s;

        let imu = source.imu(k, m)?;
        let f_b = imu.specific_force - state.accel_bias;
        if let Err(e) = ekf.propagate(&state, &f_b, dt) {
            diverged = Some(e.to_string());
            break;
        }
        state = propagate_nav(&state, &imu, dt)?;
        let prev = k;
        k += m;
        iterations += 1;

        let mut updated = false;
        if k.is_multiple_of(dtau_ticks) {
            if let Some(meas) = source.aiding(k)? {
                match ekf.correct(&state, &meas) {
                    Ok(s) => {
                        state = s;
                        updated = true;
                    }
                    Err(e @ NavError::FilterDivergence { .. }) => {
                        diverged = Some(e.to_string());
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        if options.check_health {
            health.check(ekf.covariance(), &state.attitude);
        }
        if let Some(w) = window.as_mut() {
            w.push(NavSample { velocity: state.velocity, euler: state.euler() });
            if updated {
                features.push(extract_features(w, &ctx)?);
            }
        }

        let err = (state.velocity - source.true_velocity(k)).norm();
        sum += err * dt;
        sum_sq += err * err * dt;
        weight += dt;
        max = max.max(err);
        if options.record_trace {
            trace.push(TraceRow {
                time_s: k as f64 * tick_s,
                step_size_s: dt,
                speed_error_mps: err,
                p_trace_vel: ekf.velocity_trace(),
                updated,
            });
        }
        let seg_dt = nominal as f64 * tick_s;
        match timeline.last_mut() {
            Some(seg) if seg.dt_s == seg_dt => seg.t_end_s = k as f64 * tick_s,
            _ => timeline.push(TimelineSegment {
                t_start_s: prev as f64 * tick_s,
                t_end_s: k as f64 * tick_s,
                dt_s: seg_dt,
            }),
        }
        controller.after_step(k, prev, &state, tick_s);
    }

    let metrics = RunMetrics {
        policy: policy.label(),
        mean_speed_error_mps: if weight > 0.0 { sum / weight } else { 0.0 },
        max_speed_error_mps: max,
        rms_speed_error_mps: if weight > 0.0 { (sum_sq / weight).sqrt() } else { 0.0 },
        iterations: iterations as f64,
        duration_s: weight,
    };
    Ok(RunOutput { metrics, trace, timeline, health, diverged, switches: controller.switches(), features })
}

/// One simulated run (Monte-Carlo index `run`) over a precomputed ground truth.
pub fn run_with_truth(
    config: &ScenarioConfig,
    gt: Arc<GroundTruth>,
    policy: &StepSizePolicy,
    run: u64,
    options: RunOptions,
) -> Result<RunOutput> {
    config.validate()?;
    let mut source = SimSource::new(config, gt, run)?;
    navigate(&mut source, config.filter_config()?, policy, feature_context(config)?, config.dtau_ticks()?, options)
}

/// Generate the scenario's ground truth, shared across runs.
pub fn ground_truth(config: &ScenarioConfig) -> Result<Arc<GroundTruth>> {
    Ok(Arc::new(gen_trajectory(&config.truth_spec())?))
}

/// Single run with Monte-Carlo index 0.
pub fn run_scenario(config: &ScenarioConfig, policy: &StepSizePolicy) -> Result<RunOutput> {
    let gt = ground_truth(config)?;
    run_with_truth(config, gt, policy, 0, RunOptions::default())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloResult {
    /// Per-field average over runs.
    pub mean: RunMetrics,
    pub runs: Vec<RunMetrics>,
    pub diverged_runs: usize,
}

/// Average of the per-run metrics, summed in run order.
pub fn average_metrics(runs: &[RunMetrics]) -> RunMetrics {
    let n = runs.len().max(1) as f64;
    let mut out = RunMetrics {
        policy: runs.first().map(|r| r.policy.clone()).unwrap_or_default(),
        mean_speed_error_mps: 0.0,
        max_speed_error_mps: 0.0,
        rms_speed_error_mps: 0.0,
        iterations: 0.0,
        duration_s: 0.0,
    };
    for r in runs {
        out.mean_speed_error_mps += r.mean_speed_error_mps;
        out.max_speed_error_mps += r.max_speed_error_mps;
        out.rms_speed_error_mps += r.rms_speed_error_mps;
        out.iterations += r.iterations;
        out.duration_s += r.duration_s;
    }
    out.mean_speed_error_mps /= n;
    out.max_speed_error_mps /= n;
    out.rms_speed_error_mps /= n;
    out.iterations /= n;
    out.duration_s /= n;
    out
}

/// `n` independently seeded runs, executed in parallel, averaged in run order.
pub fn monte_carlo_with_truth(
    config: &ScenarioConfig,
    gt: Arc<GroundTruth>,
    policy: &StepSizePolicy,
    n: usize,
) -> Result<MonteCarloResult> {
    monte_carlo_runs(config, gt, policy, 0..n as u64)
}

/// Monte-Carlo over an explicit range of run indices.
pub fn monte_carlo_runs(
    config: &ScenarioConfig,
    gt: Arc<GroundTruth>,
    policy: &StepSizePolicy,
    runs: std::ops::Range<u64>,
) -> Result<MonteCarloResult> {
    if runs.is_empty() {
        return Err(NavError::InvalidConfig("Monte-Carlo needs at least one run".into()));
    }
    let outputs: Vec<Result<RunOutput>> =
        runs.into_par_iter().map(|r| run_with_truth(config, gt.clone(), policy, r, RunOptions::default())).collect();
    let mut metrics = Vec::with_capacity(outputs.len());
    let mut diverged_runs = 0;
    for o in outputs {
        let o = o?;
        if o.diverged.is_some() {
            diverged_runs += 1;
        }
        metrics.push(o.metrics);
    }
    Ok(MonteCarloResult { mean: average_metrics(&metrics), runs: metrics, diverged_runs })
}

pub fn monte_carlo(config: &ScenarioConfig, policy: &StepSizePolicy, n: usize) -> Result<MonteCarloResult> {
    let gt = ground_truth(config)?;
    monte_carlo_with_truth(config, gt, policy, n)
}
