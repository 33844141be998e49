//! C ABI over the stepnav toolkit.
//!
//! Every fallible function returns a `StepnavStatus`; on failure the message
//! is kept in a thread-local slot readable with `stepnav_last_error_message`.
//! Handles are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use stepnav::adaptive::{run_adaptive, LearnedPolicy};
use stepnav::learning::svm::SvmModel;
use stepnav::sim::config::ScenarioConfig;
use stepnav::sim::runner::RunMetrics;
use stepnav::sim::{run_scenario, StepSizePolicy};
use stepnav::{presets, NavError};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepnavStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidConfig = 3,
    Parse = 4,
    Io = 5,
    FilterDivergence = 6,
    Validation = 7,
    Panic = 8,
}

/// Scenario configuration handle.
pub struct StepnavScenario {
    config: ScenarioConfig,
}

/// Trained step-size classifier handle.
pub struct StepnavModel {
    model: Arc<SvmModel>,
}

/// Accuracy and cost of one run.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepnavMetrics {
    pub mean_speed_error_mps: f64,
    pub max_speed_error_mps: f64,
    pub rms_speed_error_mps: f64,
    pub iterations: f64,
    pub duration_s: f64,
}

impl From<&RunMetrics> for StepnavMetrics {
    fn from(m: &RunMetrics) -> Self {
        Self {
            mean_speed_error_mps: m.mean_speed_error_mps,
            max_speed_error_mps: m.max_speed_error_mps,
            rms_speed_error_mps: m.rms_speed_error_mps,
            iterations: m.iterations,
            duration_s: m.duration_s,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &NavError) -> StepnavStatus {
    match e {
        NavError::InvalidConfig(_) | NavError::LatitudeOutOfRange(_) | NavError::SingularLatitude(_) => {
            StepnavStatus::InvalidConfig
        }
        NavError::Parse { .. } | NavError::Json(_) | NavError::Toml(_) | NavError::Csv(_) => StepnavStatus::Parse,
        NavError::Io(_) => StepnavStatus::Io,
        NavError::FilterDivergence { .. } => StepnavStatus::FilterDivergence,
        NavError::Validation(_) => StepnavStatus::Validation,
    }
}

struct Fail(StepnavStatus, String);

impl From<NavError> for Fail {
    fn from(e: NavError) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> StepnavStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            StepnavStatus::Ok
        }
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic".into());
            StepnavStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(StepnavStatus::NullPointer, format!("{what} is null"))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(StepnavStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn emit<T>(out: *mut *mut T, v: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(v));
    Ok(())
}

unsafe fn get<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn stepnav_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Length in bytes of the last error message on this thread, 0 if none.
#[no_mangle]
pub extern "C" fn stepnav_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(0, |s| s.as_bytes().len()))
}

/// Copy the last error message (NUL-terminated, truncated to `len - 1`
/// bytes) into `buf`. Returns the number of bytes written, excluding NUL.
///
/// # Safety
/// `buf` must point to at least `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn stepnav_last_error_message(buf: *mut c_char, len: usize) -> usize {
    if buf.is_null() || len == 0 {
        return 0;
    }
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_ref().map_or(&[][..], |s| s.as_bytes());
        let n = bytes.len().min(len - 1);
        std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), n);
        *buf.add(n) = 0;
        n
    })
}

/// Parse a scenario from TOML text.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stepnav_scenario_from_toml(
    toml: *const c_char,
    out: *mut *mut StepnavScenario,
) -> StepnavStatus {
    guard(|| {
        let config = ScenarioConfig::from_toml_str(text(toml, "toml")?)?;
        emit(out, StepnavScenario { config })
    })
}

/// Built-in scenario by name (`sensitivity_gnss`, `adaptive_gnss`, `adaptive_dvl`,
/// `field_gnss`).
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stepnav_scenario_preset(name: *const c_char, out: *mut *mut StepnavScenario) -> StepnavStatus {
    guard(|| {
        let name = text(name, "name")?;
        let config = presets::by_name(name)
            .ok_or_else(|| Fail(StepnavStatus::InvalidArgument, format!("unknown preset {name:?}")))?;
        emit(out, StepnavScenario { config })
    })
}

/// Override the master seed.
///
/// # Safety
/// `scenario` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn stepnav_scenario_set_seed(scenario: *mut StepnavScenario, seed: u64) -> StepnavStatus {
    guard(|| {
        scenario.as_mut().ok_or_else(|| null("scenario"))?.config.seed = seed;
        Ok(())
    })
}

/// # Safety
/// `scenario` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn stepnav_scenario_free(scenario: *mut StepnavScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Load a trained model from its JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stepnav_model_from_json(json: *const c_char, out: *mut *mut StepnavModel) -> StepnavStatus {
    guard(|| {
        let model = SvmModel::from_json(text(json, "json")?)?;
        emit(out, StepnavModel { model: Arc::new(model) })
    })
}

/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn stepnav_model_free(model: *mut StepnavModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Predict a step size from `n` raw feature values.
///
/// # Safety
/// `features` must point to `n` doubles; `dt_s` and `score` must be writable
/// (`score` may be null).
#[no_mangle]
pub unsafe extern "C" fn stepnav_model_predict(
    model: *const StepnavModel,
    features: *const f64,
    n: usize,
    dt_s: *mut f64,
    score: *mut f64,
) -> StepnavStatus {
    guard(|| {
        let m = get(model, "model")?;
        if features.is_null() {
            return Err(null("features"));
        }
        if dt_s.is_null() {
            return Err(null("dt_s"));
        }
        let p = m.model.predict(std::slice::from_raw_parts(features, n))?;
        *dt_s = p.dt_s;
        if !score.is_null() {
            *score = p.score;
        }
        Ok(())
    })
}

/// Run the scenario (Monte-Carlo run 0) at a fixed step size.
///
/// # Safety
/// `scenario` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stepnav_run_fixed(
    scenario: *const StepnavScenario,
    dt_s: f64,
    out: *mut StepnavMetrics,
) -> StepnavStatus {
    guard(|| {
        let s = get(scenario, "scenario")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let r = run_scenario(&s.config, &StepSizePolicy::Fixed(dt_s))?;
        *out = (&r.metrics).into();
        Ok(())
    })
}

/// Run the scenario under the learned step-size policy.
///
/// # Safety
/// `scenario` and `model` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stepnav_run_adaptive(
    scenario: *const StepnavScenario,
    model: *const StepnavModel,
    initial_dt_s: f64,
    hysteresis: bool,
    out: *mut StepnavMetrics,
) -> StepnavStatus {
    guard(|| {
        let s = get(scenario, "scenario")?;
        let m = get(model, "model")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let policy = LearnedPolicy { initial_dt: initial_dt_s, hysteresis, ..LearnedPolicy::new(m.model.clone()) };
        let r = run_adaptive(&s.config, policy)?;
        *out = (&r.metrics).into();
        Ok(())
    })
}
