//! Binary soft-margin SVM trained with SMO on z-scored features.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{NavError, Result};

use super::{COARSE_DT, FINE_DT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    Linear,
    /// `(x·z + 1)^2`
    Poly2,
}

impl Kernel {
    fn eval(self, a: &[f64], b: &[f64]) -> f64 {
        let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        match self {
            Kernel::Linear => d,
            Kernel::Poly2 => (d + 1.0).powi(2),
        }
    }
}

impl std::str::FromStr for Kernel {
    type Err = NavError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Kernel::Linear),
            "poly2" => Ok(Kernel::Poly2),
            _ => Err(NavError::InvalidConfig(format!("unknown kernel {s:?} (linear, poly2)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub kernel: Kernel,
    pub c: f64,
    /// Stop when the maximal KKT violation falls below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self { kernel: Kernel::Linear, c: 1.0, tol: 1e-4, max_iter: 10_000_000 }
    }
}

/// Step size assigned to each sign of the decision score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMap {
    pub positive_dt_s: f64,
    pub negative_dt_s: f64,
}

impl Default for ClassMap {
    fn default() -> Self {
        Self { positive_dt_s: FINE_DT, negative_dt_s: COARSE_DT }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingInfo {
    pub dataset_sha256: String,
    pub c: f64,
    pub tol: f64,
    pub seed: u64,
    pub n_train: usize,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub kernel: Kernel,
    /// Primal weights in standardized space (linear kernel only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    /// Standardized support vectors and their `alpha * y` coefficients.
    #[serde(default)]
    pub support_vectors: Vec<Vec<f64>>,
    #[serde(default)]
    pub dual_coef: Vec<f64>,
    pub bias: f64,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub class_map: ClassMap,
    #[serde(default)]
    pub training: TrainingInfo,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub dt_s: f64,
    pub score: f64,
}

impl SvmModel {
    /// Model that ignores its input and always returns `dt_s`.
    pub fn constant(dt_s: f64, n_features: usize) -> Result<Self> {
        let map = ClassMap::default();
        let bias = if dt_s == map.positive_dt_s {
            1.0
        } else if dt_s == map.negative_dt_s {
            -1.0
        } else {
            return Err(NavError::InvalidConfig(format!(
                "constant model step must be {} or {}, got {dt_s}",
                map.positive_dt_s, map.negative_dt_s
            )));
        };
        Ok(Self {
            kernel: Kernel::Linear,
            weights: Some(vec![0.0; n_features]),
            support_vectors: Vec::new(),
            dual_coef: Vec::new(),
            bias,
            mean: vec![0.0; n_features],
            std: vec![1.0; n_features],
            class_map: map,
            training: TrainingInfo::default(),
        })
    }

    pub fn n_features(&self) -> usize {
        self.mean.len()
    }

    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect()
    }

    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features() {
            return Err(NavError::Validation(format!("model expects {} features, got {}", self.n_features(), x.len())));
        }
        let z = self.standardize(x);
        let s = match &self.weights {
            Some(w) => w.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>(),
            None => self.support_vectors.iter().zip(&self.dual_coef).map(|(sv, c)| c * self.kernel.eval(sv, &z)).sum(),
        };
        Ok(s + self.bias)
    }

    /// Positive score selects the fine step; zero or negative selects the coarse one.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        let score = self.decision(x)?;
        let dt_s = if score > 0.0 { self.class_map.positive_dt_s } else { self.class_map.negative_dt_s };
        Ok(Prediction { dt_s, score })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes to JSON")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        let d = m.mean.len();
        let bad_sv = m.support_vectors.iter().any(|v| v.len() != d);
        if m.std.len() != d
            || m.weights.as_ref().is_some_and(|w| w.len() != d)
            || (m.weights.is_none() && m.support_vectors.len() != m.dual_coef.len())
            || bad_sv
            || m.std.iter().any(|s| !(*s > 0.0))
        {
            return Err(NavError::Validation("inconsistent model dimensions".into()));
        }
        Ok(m)
    }
}

/// Per-feature mean and population standard deviation; constant features get unit scale.
pub fn fit_standardization(x: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let d = x.first().map_or(0, Vec::len);
    let n = x.len() as f64;
    let mut mean = vec![0.0; d];
    for row in x {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for row in x {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            *s += (v - m).powi(2);
        }
    }
    let std = var
        .into_iter()
        .map(|s| {
            let s = (s / n).sqrt();
            if s > 1e-12 * (1.0 + s) && s.is_finite() {
                s
            } else {
                1.0
            }
        })
        .collect();
    (mean, std)
}

struct KernelRows<'a> {
    x: &'a [Vec<f64>],
    kernel: Kernel,
    cache: HashMap<usize, Vec<f64>>,
    order: VecDeque<usize>,
    cap: usize,
}

impl<'a> KernelRows<'a> {
    fn new(x: &'a [Vec<f64>], kernel: Kernel) -> Self {
        let budget = 64 * 1024 * 1024 / 8;
        Self { x, kernel, cache: HashMap::new(), order: VecDeque::new(), cap: (budget / x.len().max(1)).max(2) }
    }

    fn row(&mut self, i: usize) -> &[f64] {
        if !self.cache.contains_key(&i) {
            if self.cache.len() >= self.cap {
                if let Some(old) = self.order.pop_front() {
                    self.cache.remove(&old);
                }
            }
            let xi = &self.x[i];
            let r = self.x.iter().map(|xj| self.kernel.eval(xi, xj)).collect();
            self.cache.insert(i, r);
            self.order.push_back(i);
        }
        &self.cache[&i]
    }
}

/// Train on raw features `x` with labels `y` in {+1, -1}.
pub fn train_svm(x: &[Vec<f64>], y: &[i8], params: &SvmParams) -> Result<SvmModel> {
    let n = x.len();
    if n != y.len() {
        return Err(NavError::Validation(format!("{n} rows but {} labels", y.len())));
    }
    let d = x.first().map_or(0, Vec::len);
    if d == 0 || x.iter().any(|r| r.len() != d || r.iter().any(|v| !v.is_finite())) {
        return Err(NavError::Validation("feature rows must be nonempty, finite and equal length".into()));
    }
    if y.iter().any(|v| *v != 1 && *v != -1) {
        return Err(NavError::Validation("labels must be +1 or -1".into()));
    }
    let pos = y.iter().filter(|v| **v == 1).count();
    if pos < 2 || n - pos < 2 {
        return Err(NavError::Validation(format!(
            "need at least two examples per class ({pos} positive, {} negative)",
            n - pos
        )));
    }
    if !(params.c > 0.0) || !(params.tol > 0.0) {
        return Err(NavError::InvalidConfig("C and tolerance must be positive".into()));
    }

    let (mean, std) = fit_standardization(x);
    let z: Vec<Vec<f64>> =
        x.iter().map(|r| r.iter().zip(&mean).zip(&std).map(|((v, m), s)| (v - m) / s).collect()).collect();
    let yf: Vec<f64> = y.iter().map(|v| f64::from(*v)).collect();
    let diag: Vec<f64> = z.iter().map(|r| params.kernel.eval(r, r)).collect();
    let c = params.c;

    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut rows = KernelRows::new(&z, params.kernel);
    let mut iterations = 0;
    let mut converged = false;
    let is_up = |a: f64, y: f64| (y > 0.0 && a < c) || (y < 0.0 && a > 0.0);
    let is_low = |a: f64, y: f64| (y < 0.0 && a < c) || (y > 0.0 && a > 0.0);

    while iterations < params.max_iter {
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            if is_up(alpha[t], yf[t]) {
                let v = -yf[t] * grad[t];
                if v > gmax {
                    gmax = v;
                    i = t;
                }
            }
        }
        if i == usize::MAX {
            converged = true;
            break;
        }
        let ki = rows.row(i).to_vec();
        let mut gmin = f64::INFINITY;
        let mut best = f64::INFINITY;
        let mut j = usize::MAX;
        for t in 0..n {
            if !is_low(alpha[t], yf[t]) {
                continue;
            }
            let v = -yf[t] * grad[t];
            gmin = gmin.min(v);
            let b = gmax - v;
            if b > 0.0 {
                let a = diag[i] + diag[t] - 2.0 * ki[t];
                let obj = -(b * b) / if a > 0.0 { a } else { 1e-12 };
                if obj < best {
                    best = obj;
                    j = t;
                }
            }
        }
        if gmax - gmin < params.tol || j == usize::MAX {
            converged = true;
            break;
        }
        iterations += 1;
        let kj = rows.row(j).to_vec();
        let (ai, aj) = (alpha[i], alpha[j]);
        let mut quad = diag[i] + diag[j] - 2.0 * ki[j];
        if quad <= 0.0 {
            quad = 1e-12;
        }
        if yf[i] != yf[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (dai, daj) = (alpha[i] - ai, alpha[j] - aj);
        for t in 0..n {
            grad[t] += yf[t] * (yf[i] * ki[t] * dai + yf[j] * kj[t] * daj);
        }
    }
    if !converged {
        log::warn!("SMO stopped after {iterations} iterations without reaching tolerance {}", params.tol);
    }

    // offset from free vectors, or the midpoint of the feasible interval
    let (mut ub, mut lb, mut sum, mut n_free) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
    for t in 0..n {
        let yg = yf[t] * grad[t];
        if alpha[t] >= c {
            if yf[t] < 0.0 {
                ub = ub.min(yg)
            } else {
                lb = lb.max(yg)
            }
        } else if alpha[t] <= 0.0 {
            if yf[t] > 0.0 {
                ub = ub.min(yg)
            } else {
                lb = lb.max(yg)
            }
        } else {
            n_free += 1;
            sum += yg;
        }
    }
    let rho = if n_free > 0 { sum / n_free as f64 } else { (ub + lb) / 2.0 };

    let (weights, support_vectors, dual_coef) = match params.kernel {
        Kernel::Linear => {
            let mut w = vec![0.0; d];
            for t in 0..n {
                if alpha[t] > 0.0 {
                    for (wk, zk) in w.iter_mut().zip(&z[t]) {
                        *wk += alpha[t] * yf[t] * zk;
                    }
                }
            }
            (Some(w), Vec::new(), Vec::new())
        }
        Kernel::Poly2 => {
            let idx: Vec<usize> = (0..n).filter(|t| alpha[*t] > 0.0).collect();
            (None, idx.iter().map(|t| z[*t].clone()).collect(), idx.iter().map(|t| alpha[*t] * yf[*t]).collect())
        }
    };
    Ok(SvmModel {
        kernel: params.kernel,
        weights,
        support_vectors,
        dual_coef,
        bias: -rho,
        mean,
        std,
        class_map: ClassMap::default(),
        training: TrainingInfo { c, tol: params.tol, n_train: n, iterations, converged, ..TrainingInfo::default() },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn blobs(n: usize, gap: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<i8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for k in 0..n {
            let label: i8 = if k % 2 == 0 { 1 } else { -1 };
            let cx = f64::from(label) * (gap / 2.0 + 1.5);
            let nx: f64 = StandardNormal.sample(&mut rng);
            let ny: f64 = StandardNormal.sample(&mut rng);
            let dx = (nx * 0.4).clamp(-1.4, 1.4);
            x.push(vec![cx + dx, ny * 2.0]);
            y.push(label);
        }
        (x, y)
    }

    #[test]
    fn separable_blobs_fit_exactly() {
        let (x, y) = blobs(200, 2.0, 1);
        for kernel in [Kernel::Linear, Kernel::Poly2] {
            let m = train_svm(&x, &y, &SvmParams { kernel, ..SvmParams::default() }).unwrap();
            assert!(m.training.converged);
            for (r, l) in x.iter().zip(&y) {
                let p = m.predict(r).unwrap();
                assert_eq!(p.score > 0.0, *l == 1, "{kernel:?} misclassified {r:?}");
            }
        }
    }

    #[test]
    fn duplicated_data_same_decision() {
        // hard-margin regime: no multiplier reaches the box bound
        let (x, y) = blobs(60, 2.0, 2);
        let params = SvmParams { c: 1e3, tol: 1e-12, ..SvmParams::default() };
        let a = train_svm(&x, &y, &params).unwrap();
        let x2: Vec<_> = x.iter().chain(&x).cloned().collect();
        let y2: Vec<_> = y.iter().chain(&y).copied().collect();
        let b = train_svm(&x2, &y2, &params).unwrap();
        assert!(a.training.converged && b.training.converged);
        for gx in -5..=5 {
            for gy in -5..=5 {
                let p = [gx as f64, gy as f64];
                let (da, db) = (a.decision(&p).unwrap(), b.decision(&p).unwrap());
                assert!((da - db).abs() < 1e-8, "{p:?}: {da} vs {db}");
            }
        }
    }

    #[test]
    fn affine_rescaling_keeps_predictions() {
        let (x, y) = blobs(80, 1.0, 3);
        let a = train_svm(&x, &y, &SvmParams::default()).unwrap();
        let xs: Vec<Vec<f64>> = x.iter().map(|r| vec![r[0] * 1000.0 + 7.0, r[1] * 0.01 - 3.0]).collect();
        let b = train_svm(&xs, &y, &SvmParams::default()).unwrap();
        for (r, s) in x.iter().zip(&xs) {
            assert_eq!(a.predict(r).unwrap().dt_s, b.predict(s).unwrap().dt_s);
        }
    }

    #[test]
    fn single_class_rejected() {
        let x = vec![vec![1.0], vec![2.0], vec![3.0]];
        assert!(train_svm(&x, &[1, 1, 1], &SvmParams::default()).is_err());
        assert!(train_svm(&x, &[1, 1, -1], &SvmParams::default()).is_err());
    }

    #[test]
    fn class_mapping_and_ties() {
        let mut m = SvmModel::constant(FINE_DT, 3).unwrap();
        assert_eq!(m.predict(&[0.0; 3]).unwrap().dt_s, FINE_DT);
        m.bias = 0.0;
        assert_eq!(m.predict(&[0.0; 3]).unwrap().dt_s, COARSE_DT);
        m.bias = -0.5;
        assert_eq!(m.predict(&[1.0; 3]).unwrap().dt_s, COARSE_DT);
        assert!(SvmModel::constant(0.01, 3).is_err());
        assert!(m.predict(&[0.0; 2]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x: Vec<Vec<f64>> =
            (0..50).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let y: Vec<i8> = x.iter().map(|r| if r[0] * r[0] + r[1] * r[1] > 0.4 { 1 } else { -1 }).collect();
        let m = train_svm(&x, &y, &SvmParams { kernel: Kernel::Poly2, ..SvmParams::default() }).unwrap();
        let back = SvmModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        assert!(SvmModel::from_json("{\"kernel\":\"linear\"}").is_err());
    }
}
