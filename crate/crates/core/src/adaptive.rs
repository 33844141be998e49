//! Online step-size adaptation driven by a trained classifier.

use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{NavError, Result};
use crate::learning::features::{extract_features, FeatureContext, FeatureWindow, NavSample, WINDOW_LEN};
use crate::learning::svm::SvmModel;
use crate::learning::{COARSE_DT, FINE_DT};
use crate::sim::config::{to_ticks, ScenarioConfig};
use crate::sim::runner::{run_scenario, RunOutput, StepSizePolicy};
use crate::strapdown::NavState;

/// Number of recent predictions the switching rule looks at.
pub const HISTORY_LEN: usize = 20;

/// Contiguous stretch of the run at one nominal step size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimelineSegment {
    pub t_start_s: f64,
    pub t_end_s: f64,
    pub dt_s: f64,
}

/// Classifier-driven policy settings.
#[derive(Debug, Clone)]
pub struct LearnedPolicy {
    /// Without a model the policy holds the initial step.
    pub model: Option<Arc<SvmModel>>,
    pub initial_dt: f64,
    /// Prediction period; defaults to the aiding interval.
    pub tuning_rate: Option<f64>,
    pub hysteresis: bool,
    pub history_len: usize,
    pub window: usize,
}

impl LearnedPolicy {
    pub fn new(model: Arc<SvmModel>) -> Self {
        Self {
            model: Some(model),
            initial_dt: FINE_DT,
            tuning_rate: None,
            hysteresis: true,
            history_len: HISTORY_LEN,
            window: WINDOW_LEN,
        }
    }
}

/// Switching rule over the stream of predicted step sizes.
///
/// With hysteresis, the step changes only once the last `len` predictions
/// all agree on a value other than the one in force. Without it, every
/// differing prediction switches.
#[derive(Debug, Clone)]
pub struct SwitchRule {
    history: VecDeque<usize>,
    len: usize,
    hysteresis: bool,
}

impl SwitchRule {
    pub fn new(len: usize, hysteresis: bool) -> Self {
        Self { history: VecDeque::with_capacity(len.max(1)), len: len.max(1), hysteresis }
    }

    /// Record a prediction; returns the new step if it should switch.
    pub fn push(&mut self, predicted: usize, current: usize) -> Option<usize> {
        if self.history.len() == self.len {
            self.history.pop_front();
        }
        self.history.push_back(predicted);
        if predicted == current {
            return None;
        }
        if !self.hysteresis || (self.history.len() == self.len && self.history.iter().all(|p| *p == predicted)) {
            Some(predicted)
        } else {
            None
        }
    }

    pub fn history(&self) -> impl Iterator<Item = &usize> {
        self.history.iter()
    }
}

/// Runtime state of the learned policy inside the navigation loop.
#[derive(Debug, Clone)]
pub struct AdaptivePolicyState {
    model: Option<Arc<SvmModel>>,
    ctx: FeatureContext,
    current: usize,
    fine: usize,
    coarse: usize,
    tuning: usize,
    window: FeatureWindow,
    rule: SwitchRule,
    switches: usize,
    predictions: usize,
}

impl AdaptivePolicyState {
    pub fn new(policy: &LearnedPolicy, ctx: FeatureContext, tick_s: f64, dtau_ticks: usize) -> Result<Self> {
        let fine = to_ticks(FINE_DT, tick_s)?;
        let coarse = to_ticks(COARSE_DT, tick_s)?;
        let current = to_ticks(policy.initial_dt, tick_s)?;
        if current != fine && current != coarse {
            return Err(NavError::InvalidConfig(format!(
                "initial step {} must be {FINE_DT} or {COARSE_DT}",
                policy.initial_dt
            )));
        }
        let tuning = match policy.tuning_rate {
            Some(r) => to_ticks(r, tick_s)?,
            None => dtau_ticks,
        };
        if policy.model.is_none() {
            log::warn!("no step-size model loaded; holding {} s", policy.initial_dt);
        }
        Ok(Self {
            model: policy.model.clone(),
            ctx,
            current,
            fine,
            coarse,
            tuning: tuning.max(1),
            window: FeatureWindow::new(policy.window),
            rule: SwitchRule::new(policy.history_len, policy.hysteresis),
            switches: 0,
            predictions: 0,
        })
    }

    pub fn current_ticks(&self) -> usize {
        self.current
    }

    pub fn switches(&self) -> usize {
        self.switches
    }

    pub fn predictions(&self) -> usize {
        self.predictions
    }

    /// Record the state after the step ending at `tick`; predict when the
    /// step crossed a tuning boundary and the window is full.
    pub fn observe(&mut self, tick: usize, prev_tick: usize, state: &NavState, _tick_s: f64) {
        self.window.push(NavSample { velocity: state.velocity, euler: state.euler() });
        let Some(model) = &self.model else { return };
        if tick / self.tuning == prev_tick / self.tuning || !self.window.is_full() {
            return;
        }
        let predicted = match extract_features(&self.window, &self.ctx).and_then(|f| model.predict(&f.values)) {
            Ok(p) => {
                if p.dt_s == FINE_DT {
                    self.fine
                } else {
                    self.coarse
                }
            }
            Err(e) => {
                log::warn!("step-size prediction failed at tick {tick}: {e}");
                return;
            }
        };
        self.predictions += 1;
        if let Some(next) = self.rule.push(predicted, self.current) {
            self.current = next;
            self.switches += 1;
        }
    }

    /// Observe one step and return the step size (s) for the next one.
    pub fn adaptive_step(&mut self, tick: usize, prev_tick: usize, state: &NavState, tick_s: f64) -> f64 {
        self.observe(tick, prev_tick, state, tick_s);
        self.current as f64 * tick_s
    }
}

/// Closed-loop run under the learned policy (Monte-Carlo index 0).
pub fn run_adaptive(config: &ScenarioConfig, policy: LearnedPolicy) -> Result<RunOutput> {
    run_scenario(config, &StepSizePolicy::Learned(policy))
}

/// Mechanization steps implied by a timeline.
pub fn count_iterations(timeline: &[TimelineSegment]) -> u64 {
    timeline.iter().map(|s| ((s.t_end_s - s.t_start_s) / s.dt_s).round() as u64).sum()
}
