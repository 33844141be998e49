//! Step-size classification: features, SVM, feature ranking, evaluation and
//! the speed-threshold baseline.

pub mod features;
pub mod metrics;
pub mod mrmr;
pub mod svm;

use crate::error::{NavError, Result};

/// Fine step size (positive class), s.
pub const FINE_DT: f64 = 0.002;
/// Coarse step size (negative class), s.
pub const COARSE_DT: f64 = 0.04;

/// +1 for the fine step, -1 for the coarse step.
pub fn class_of(dt: f64) -> Result<i8> {
    if dt == FINE_DT {
        Ok(1)
    } else if dt == COARSE_DT {
        Ok(-1)
    } else {
        Err(NavError::Validation(format!("step {dt} is not one of {FINE_DT}, {COARSE_DT}")))
    }
}

/// Speed-threshold rule: fine step strictly above the threshold, coarse otherwise.
pub fn baseline_policy(speed: f64, v_thresh: f64, dt_min: f64, dt_max: f64) -> f64 {
    if speed > v_thresh {
        dt_min
    } else {
        dt_max
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baseline_branches() {
        assert_eq!(baseline_policy(6.0, 5.0, 0.002, 0.04), 0.002);
        assert_eq!(baseline_policy(5.0, 5.0, 0.002, 0.04), 0.04);
        assert_eq!(baseline_policy(0.0, 5.0, 0.002, 0.04), 0.04);
    }

    #[test]
    fn class_labels() {
        assert_eq!(class_of(0.002).unwrap(), 1);
        assert_eq!(class_of(0.04).unwrap(), -1);
        assert!(class_of(0.01).is_err());
    }
}
