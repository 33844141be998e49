//! Greedy minimum-redundancy maximum-relevance ranking over discretized features.

use serde::{Deserialize, Serialize};

use crate::error::{NavError, Result};

pub const DEFAULT_BINS: usize = 16;

/// Equal-frequency bin index per sample; equal values share a bin.
pub fn equal_frequency_bins(x: &[f64], bins: usize) -> Vec<usize> {
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, b| x[*a].total_cmp(&x[*b]));
    let mut out = vec![0; n];
    let mut k = 0;
    while k < n {
        let start = k;
        while k + 1 < n && x[order[k + 1]] == x[order[start]] {
            k += 1;
        }
        let bin = (start * bins / n.max(1)).min(bins - 1);
        for idx in &order[start..=k] {
            out[*idx] = bin;
        }
        k += 1;
    }
    out
}

/// Mutual information of two discrete sequences in nats.
pub fn mutual_information(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    if n == 0 {
        return 0.0;
    }
    let na = a.iter().max().map_or(0, |m| m + 1);
    let nb = b.iter().max().map_or(0, |m| m + 1);
    let mut joint = vec![0usize; na * nb];
    let mut pa = vec![0usize; na];
    let mut pb = vec![0usize; nb];
    for (x, y) in a.iter().zip(b) {
        joint[x * nb + y] += 1;
        pa[*x] += 1;
        pb[*y] += 1;
    }
    let nf = n as f64;
    let mut mi = 0.0;
    for x in 0..na {
        for y in 0..nb {
            let c = joint[x * nb + y];
            if c > 0 {
                let c = c as f64;
                mi += c / nf * (c * nf / (pa[x] as f64 * pb[y] as f64)).ln();
            }
        }
    }
    mi.max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub index: usize,
    pub name: String,
    /// Relevance minus mean redundancy at the time of selection.
    pub score: f64,
    pub relevance: f64,
}

/// Rank columns of `x` (rows are samples) against the class labels.
///
/// Ties go to the lower column index.
pub fn mrmr_rank(x: &[Vec<f64>], labels: &[i8], names: &[&str], bins: usize) -> Result<Vec<RankedFeature>> {
    let d = x.first().map_or(0, Vec::len);
    if d < 2 || x.iter().any(|r| r.len() != d) {
        return Err(NavError::Validation("need at least two equal-length feature columns".into()));
    }
    if labels.len() != x.len() || names.len() != d || bins < 2 {
        return Err(NavError::Validation("label, name or bin count mismatch".into()));
    }
    let mut classes: Vec<i8> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(NavError::Validation("need at least two classes".into()));
    }
    let y: Vec<usize> = labels.iter().map(|l| classes.binary_search(l).unwrap_or(0)).collect();
    let cols: Vec<Vec<usize>> =
        (0..d).map(|j| equal_frequency_bins(&x.iter().map(|r| r[j]).collect::<Vec<_>>(), bins)).collect();
    let relevance: Vec<f64> = cols.iter().map(|c| mutual_information(c, &y)).collect();

    let mut redundancy = vec![0.0; d];
    let mut selected: Vec<RankedFeature> = Vec::with_capacity(d);
    let mut remaining: Vec<usize> = (0..d).collect();
    while !remaining.is_empty() {
        let k = selected.len() as f64;
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (pos, &j) in remaining.iter().enumerate() {
            let s = if k == 0.0 { relevance[j] } else { relevance[j] - redundancy[j] / k };
            if s > best_score + 1e-12 {
                best_score = s;
                best = pos;
            }
        }
        let j = remaining.remove(best);
        for &r in &remaining {
            redundancy[r] += mutual_information(&cols[r], &cols[j]);
        }
        selected.push(RankedFeature {
            index: j,
            name: names[j].to_string(),
            score: best_score,
            relevance: relevance[j],
        });
    }
    Ok(selected)
}
