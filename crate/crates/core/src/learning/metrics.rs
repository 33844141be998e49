//! ROC curve, area under it, accuracy and confusion counts.

use serde::{Deserialize, Serialize};

use crate::error::{NavError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Scores at or above this value are called positive.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub auc: f64,
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub roc: Vec<RocPoint>,
}

/// ROC by sweeping the threshold over the distinct scores, highest first.
pub fn roc_curve(scores: &[f64], positive: &[bool]) -> Result<Vec<RocPoint>> {
    if scores.len() != positive.len() {
        return Err(NavError::Validation("scores and labels differ in length".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(NavError::Validation("NaN score".into()));
    }
    let p = positive.iter().filter(|v| **v).count();
    let n = positive.len() - p;
    if p == 0 || n == 0 {
        return Err(NavError::Validation("ROC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|a, b| scores[*b].total_cmp(&scores[*a]));
    let mut pts = vec![RocPoint { fpr: 0.0, tpr: 0.0, threshold: f64::INFINITY }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        while k < order.len() && scores[order[k]] == s {
            if positive[order[k]] {
                tp += 1
            } else {
                fp += 1
            }
            k += 1;
        }
        pts.push(RocPoint { fpr: fp as f64 / n as f64, tpr: tp as f64 / p as f64, threshold: s });
    }
    Ok(pts)
}

/// Trapezoid-rule area under a ROC curve.
pub fn auc_trapezoid(roc: &[RocPoint]) -> f64 {
    roc.windows(2).map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0).sum()
}

pub fn roc_auc(scores: &[f64], positive: &[bool]) -> Result<(Vec<RocPoint>, f64)> {
    let roc = roc_curve(scores, positive)?;
    let auc = auc_trapezoid(&roc);
    Ok((roc, auc))
}

pub fn accuracy(predicted: &[bool], actual: &[bool]) -> Result<f64> {
    if predicted.len() != actual.len() || predicted.is_empty() {
        return Err(NavError::Validation("predictions and labels must be nonempty and aligned".into()));
    }
    let hit = predicted.iter().zip(actual).filter(|(a, b)| a == b).count();
    Ok(hit as f64 / predicted.len() as f64)
}

/// Full report; a sample is predicted positive when its score is above zero.
pub fn evaluate(scores: &[f64], positive: &[bool]) -> Result<EvalReport> {
    let (roc, auc) = roc_auc(scores, positive)?;
    let predicted: Vec<bool> = scores.iter().map(|s| *s > 0.0).collect();
    let mut r = EvalReport { accuracy: accuracy(&predicted, positive)?, auc, tp: 0, tn: 0, fp: 0, fn_: 0, roc };
    for (p, a) in predicted.iter().zip(positive) {
        match (p, a) {
            (true, true) => r.tp += 1,
            (false, false) => r.tn += 1,
            (true, false) => r.fp += 1,
            (false, true) => r.fn_ += 1,
        }
    }
    Ok(r)
}
