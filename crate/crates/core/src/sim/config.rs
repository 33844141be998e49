//! Scenario configuration and its on-disk (TOML or JSON) form.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ekf::{AidingKind, FilterConfig, MeasurementNoiseConfig, ProcessNoiseConfig};
use crate::error::{NavError, Result};

use super::trajectory::TrajectorySpec;
use super::truth::TruthSpec;

/// Ground-truth grid spacing; every step size is a whole number of ticks.
pub const DEFAULT_TICK_S: f64 = 0.001;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub aiding: AidingKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gnss_vel_var: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dvl_vel_var: Option<f64>,
    /// Vertical-axis aiding variance when it differs from the horizontal one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aiding_vel_var_vertical: Option<f64>,
    pub accel_var: f64,
    pub gyro_var: f64,
    #[serde(default)]
    pub accel_bias_rw_var: f64,
    #[serde(default)]
    pub gyro_bias_rw_var: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub dtau: f64,
    pub duration_s: f64,
    pub v0: [f64; 3],
    /// Latitude and longitude in degrees, altitude in metres.
    pub p0: [f64; 3],
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_mc_n")]
    pub mc_n: usize,
    #[serde(default = "default_tick")]
    pub tick_s: f64,
    #[serde(default)]
    pub joseph: bool,
    /// Speed threshold for the speed-based baseline policy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_thresh: Option<f64>,
    pub trajectory: TrajectorySpec,
}

fn default_dt() -> f64 {
    0.01
}

fn default_mc_n() -> usize {
    1
}

fn default_tick() -> f64 {
    DEFAULT_TICK_S
}

/// Convert a duration to a whole number of ticks, rejecting non-multiples.
pub fn to_ticks(x: f64, tick: f64) -> Result<usize> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(NavError::InvalidConfig(format!("duration must be positive, got {x}")));
    }
    let n = (x / tick).round();
    if n < 1.0 || (n * tick - x).abs() > 1e-9 * x.max(1.0) {
        return Err(NavError::InvalidConfig(format!("{x} s is not a whole multiple of the {tick} s grid")));
    }
    Ok(n as usize)
}

impl ScenarioConfig {
    /// Aiding variance on the horizontal axes.
    pub fn aiding_var(&self) -> Result<f64> {
        let v = match self.aiding {
            AidingKind::Gnss => self.gnss_vel_var,
            AidingKind::Dvl => self.dvl_vel_var,
        };
        v.ok_or_else(|| {
            NavError::InvalidConfig(format!(
                "{}_vel_var is required for {} aiding",
                self.aiding.as_str(),
                self.aiding.as_str()
            ))
        })
    }

    pub fn measurement_noise(&self) -> Result<MeasurementNoiseConfig> {
        let h = self.aiding_var()?;
        let v = self.aiding_vel_var_vertical.unwrap_or(h);
        Ok(MeasurementNoiseConfig { variance: [h, h, v] })
    }

    pub fn process_noise(&self) -> ProcessNoiseConfig {
        ProcessNoiseConfig {
            accel_var: self.accel_var,
            gyro_var: self.gyro_var,
            accel_bias_rw_var: self.accel_bias_rw_var,
            gyro_bias_rw_var: self.gyro_bias_rw_var,
        }
    }

    pub fn filter_config(&self) -> Result<FilterConfig> {
        Ok(FilterConfig { process: self.process_noise(), measurement: self.measurement_noise()?, joseph: self.joseph })
    }

    pub fn truth_spec(&self) -> TruthSpec {
        TruthSpec {
            trajectory: self.trajectory.clone(),
            v0: self.v0,
            p0: self.p0,
            duration_s: self.duration_s,
            tick_s: self.tick_s,
        }
    }

    pub fn total_ticks(&self) -> Result<usize> {
        to_ticks(self.duration_s, self.tick_s)
    }

    pub fn dtau_ticks(&self) -> Result<usize> {
        to_ticks(self.dtau, self.tick_s)
    }

    pub fn dt_ticks(&self) -> Result<usize> {
        to_ticks(self.dt, self.tick_s)
    }

    /// Check value ranges. Step sizes that do not divide the aiding interval
    /// are allowed; steps are shortened to land on every aiding epoch.
    pub fn validate(&self) -> Result<()> {
        self.process_noise().validate()?;
        let r = self.measurement_noise()?;
        if r.variance.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(NavError::InvalidConfig("aiding variance must be non-negative".into()));
        }
        let dt = self.dt_ticks()?;
        let dtau = self.dtau_ticks()?;
        self.total_ticks()?;
        if dtau < dt {
            return Err(NavError::InvalidConfig(format!(
                "aiding interval {} s is shorter than the step {} s",
                self.dtau, self.dt
            )));
        }
        if self.mc_n == 0 {
            return Err(NavError::InvalidConfig("mc_n must be at least 1".into()));
        }
        if !self.p0.iter().all(|x| x.is_finite()) || self.p0[0].abs() >= 90.0 {
            return Err(NavError::InvalidConfig(format!("bad initial position {:?}", self.p0)));
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let c: Self = toml::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    /// Load from a `.toml` or `.json` file (by extension; TOML otherwise).
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json_str(&text),
            _ => Self::from_toml_str(&text),
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario config serializes to TOML")
    }
}
