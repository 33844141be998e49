//! Labeled step-size examples generated over a grid of noise levels,
//! aiding intervals and trajectories.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ekf::AidingKind;
use crate::error::{NavError, Result};
use crate::learning::features::{FeatureVector, FEATURE_NAMES, N_FEATURES, WINDOW_LEN};
use crate::learning::{class_of, COARSE_DT, FINE_DT};
use crate::presets;
use crate::sim::config::{ScenarioConfig, DEFAULT_TICK_S};
use crate::sim::runner::{ground_truth, run_with_truth, RunOptions, StepSizePolicy};
use crate::sim::sensors::derive_seed;
use crate::sim::trajectory::{PathShape, TrajectorySpec};
use crate::sim::truth::GroundTruth;

const STREAM_SCENARIO: u64 = 3;

/// Log-spaced values between `min` and `max` inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRange {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl LogRange {
    pub fn values(&self) -> Vec<f64> {
        match self.count {
            0 => Vec::new(),
            1 => vec![self.min],
            n => {
                let (a, b) = (self.min.ln(), self.max.ln());
                (0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()).collect()
            }
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.min > 0.0) || !(self.max >= self.min) || self.count == 0 {
            return Err(NavError::InvalidConfig(format!("{name}: need 0 < min <= max and count >= 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryCase {
    pub name: String,
    pub trajectory: TrajectorySpec,
    pub v0: [f64; 3],
}

/// Parameter grid; standard deviations are log-spaced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationGrid {
    pub aiding: AidingKind,
    pub aiding_std: LogRange,
    pub dtau: Vec<f64>,
    pub accel_std: LogRange,
    pub gyro_std: LogRange,
    pub trajectories: Vec<TrajectoryCase>,
    pub duration_s: f64,
    /// Feature windows taken per scenario, one per selected aiding interval.
    pub windows: usize,
    /// Monte-Carlo runs averaged when labeling.
    pub label_mc_n: usize,
    pub p0: [f64; 3],
    #[serde(default = "default_tick")]
    pub tick_s: f64,
}

fn default_tick() -> f64 {
    DEFAULT_TICK_S
}

impl GenerationGrid {
    /// Full-range grid: 10 aiding levels, 6 aiding intervals, 10 accelerometer
    /// and 10 gyroscope levels.
    pub fn full() -> Self {
        Self {
            aiding: AidingKind::Gnss,
            aiding_std: LogRange { min: 1e-4, max: 0.1, count: 10 },
            dtau: vec![0.12, 0.48, 0.88, 1.24, 1.6, 2.0],
            accel_std: LogRange { min: 5e-4, max: 0.5, count: 10 },
            gyro_std: LogRange { min: 1e-4, max: 0.1, count: 10 },
            trajectories: default_trajectories(),
            duration_s: 20.0,
            windows: 1,
            label_mc_n: 2,
            p0: [32.0, 34.0, 5.0],
            tick_s: DEFAULT_TICK_S,
        }
    }

    /// 2,000-example grid over the same ranges.
    pub fn desk() -> Self {
        Self {
            aiding_std: LogRange { min: 1e-4, max: 0.1, count: 5 },
            dtau: vec![0.12, 0.48, 1.0, 2.0],
            accel_std: LogRange { min: 5e-4, max: 0.5, count: 5 },
            gyro_std: LogRange { min: 1e-4, max: 0.1, count: 5 },
            ..Self::full()
        }
    }

    pub fn n_scenarios(&self) -> usize {
        self.trajectories.len() * self.dtau.len() * self.aiding_std.count * self.accel_std.count * self.gyro_std.count
    }

    pub fn n_examples(&self) -> usize {
        self.n_scenarios() * self.windows
    }

    pub fn validate(&self) -> Result<()> {
        self.aiding_std.validate("aiding_std")?;
        self.accel_std.validate("accel_std")?;
        self.gyro_std.validate("gyro_std")?;
        if self.trajectories.is_empty() || self.dtau.is_empty() || self.windows == 0 || self.label_mc_n == 0 {
            return Err(NavError::InvalidConfig("grid must be nonempty".into()));
        }
        for dtau in &self.dtau {
            let epochs = (self.duration_s / dtau + 1e-9).floor() as usize;
            if epochs < 2 * self.windows {
                return Err(NavError::InvalidConfig(format!(
                    "aiding interval {dtau} s leaves {epochs} updates in {} s, fewer than twice the {} windows",
                    self.duration_s, self.windows
                )));
            }
        }
        for id in 0..self.n_scenarios() {
            self.scenario(id, 0)?.validate()?;
        }
        Ok(())
    }

    /// Scenario `id` in canonical order: trajectory, aiding interval, aiding,
    /// accelerometer and gyroscope level, the last varying fastest.
    pub fn scenario(&self, id: usize, seed: u64) -> Result<ScenarioConfig> {
        if id >= self.n_scenarios() {
            return Err(NavError::InvalidConfig(format!("scenario id {id} out of range")));
        }
        let (g, a, r) = (self.gyro_std.values(), self.accel_std.values(), self.aiding_std.values());
        let mut k = id;
        let gi = k % g.len();
        k /= g.len();
        let ai = k % a.len();
        k /= a.len();
        let ri = k % r.len();
        k /= r.len();
        let di = k % self.dtau.len();
        k /= self.dtau.len();
        let case = &self.trajectories[k];
        let var = r[ri].powi(2);
        Ok(ScenarioConfig {
            aiding: self.aiding,
            gnss_vel_var: (self.aiding == AidingKind::Gnss).then_some(var),
            dvl_vel_var: (self.aiding == AidingKind::Dvl).then_some(var),
            aiding_vel_var_vertical: None,
            accel_var: a[ai].powi(2),
            gyro_var: g[gi].powi(2),
            accel_bias_rw_var: 0.0,
            gyro_bias_rw_var: 0.0,
            dt: COARSE_DT,
            dtau: self.dtau[di],
            duration_s: self.duration_s,
            v0: case.v0,
            p0: self.p0,
            seed: derive_seed(seed, id as u64, STREAM_SCENARIO),
            mc_n: self.label_mc_n,
            tick_s: self.tick_s,
            joseph: false,
            v_thresh: None,
            trajectory: case.trajectory.clone(),
        })
    }

    fn trajectory_index(&self, id: usize) -> usize {
        id / (self.dtau.len() * self.aiding_std.count * self.accel_std.count * self.gyro_std.count)
    }
}

/// Straight line, two circles and a closed loop with varying speed.
pub fn default_trajectories() -> Vec<TrajectoryCase> {
    vec![
        TrajectoryCase {
            name: "straight".into(),
            trajectory: TrajectorySpec::new(PathShape::StraightLine),
            v0: [3.0, 3.0, 0.0],
        },
        TrajectoryCase {
            name: "circle_small".into(),
            trajectory: TrajectorySpec::new(PathShape::Circle { radius: 20.0, clockwise: false }),
            v0: [5.0, 0.0, 0.0],
        },
        TrajectoryCase {
            name: "circle_large".into(),
            trajectory: TrajectorySpec::new(PathShape::Circle { radius: 60.0, clockwise: true }),
            v0: [0.0, -2.0, 0.0],
        },
        TrajectoryCase {
            name: "curvy_loop".into(),
            trajectory: TrajectorySpec { speed_amplitude: 1.0, speed_period: 15.0, ..presets::curvy_loop() },
            v0: [2.0, 0.0, 0.0],
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub features: [f64; N_FEATURES],
    pub label_dt_s: f64,
    pub scenario_id: usize,
    pub window_idx: usize,
    /// Even the fine step exceeded the bound.
    pub out_of_bound: bool,
}

impl LabeledExample {
    pub fn class(&self) -> i8 {
        class_of(self.label_dt_s).unwrap_or(1)
    }
}

/// Labeling outcome for one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioLabel {
    pub scenario_id: usize,
    pub label_dt_s: f64,
    pub error_mps: f64,
    pub out_of_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub grid: GenerationGrid,
    pub bound_mps: f64,
    pub seed: u64,
    pub examples: Vec<LabeledExample>,
    pub labels: Vec<ScenarioLabel>,
}

/// Aiding-update indices used as feature windows: evenly spread over the second half.
fn window_indices(updates: usize, windows: usize) -> Vec<usize> {
    let half = updates / 2;
    (0..windows).map(|w| half + (w + 1) * (updates - half) / windows - 1).collect()
}

fn mean_error(
    config: &ScenarioConfig,
    gt: &Arc<GroundTruth>,
    dt: f64,
    runs: usize,
) -> Result<(f64, Vec<FeatureVector>)> {
    let mut c = config.clone();
    c.dt = dt;
    let policy = StepSizePolicy::Fixed(dt);
    let mut sum = 0.0;
    let mut features = Vec::new();
    for run in 0..runs as u64 {
        let opts = RunOptions { feature_window: (run == 0).then_some(WINDOW_LEN), ..RunOptions::default() };
        let out = run_with_truth(&c, gt.clone(), &policy, run, opts)?;
        if let Some(msg) = &out.diverged {
            log::warn!("scenario seed {} diverged at {dt} s: {msg}", config.seed);
            return Ok((f64::INFINITY, out.features));
        }
        sum += out.metrics.mean_speed_error_mps;
        if run == 0 {
            features = out.features;
        }
    }
    Ok((sum / runs as f64, features))
}

/// Label one scenario: coarse step if it meets the bound, otherwise the fine step.
pub fn label_scenario(
    grid: &GenerationGrid,
    id: usize,
    gt: &Arc<GroundTruth>,
    bound: f64,
    seed: u64,
) -> Result<(ScenarioLabel, Vec<LabeledExample>)> {
    let config = grid.scenario(id, seed)?;
    let (mut err, mut feats) = mean_error(&config, gt, COARSE_DT, grid.label_mc_n)?;
    let mut label = COARSE_DT;
    if !(err <= bound) {
        (err, feats) = mean_error(&config, gt, FINE_DT, grid.label_mc_n)?;
        label = FINE_DT;
    }
    let out_of_bound = !(err <= bound);
    let idx = window_indices(feats.len(), grid.windows);
    if feats.len() < 2 * grid.windows {
        return Err(NavError::Validation(format!(
            "scenario {id} produced {} feature windows, need {}",
            feats.len(),
            2 * grid.windows
        )));
    }
    let examples = idx
        .iter()
        .enumerate()
        .map(|(w, &i)| LabeledExample {
            features: feats[i].values,
            label_dt_s: label,
            scenario_id: id,
            window_idx: w,
            out_of_bound,
        })
        .collect();
    Ok((ScenarioLabel { scenario_id: id, label_dt_s: label, error_mps: err, out_of_bound }, examples))
}

/// Generate the dataset; scenarios run in parallel, output is in scenario order.
pub fn generate_dataset(grid: &GenerationGrid, bound: f64, seed: u64) -> Result<Dataset> {
    if !(bound > 0.0) {
        return Err(NavError::InvalidConfig(format!("bound must be positive, got {bound}")));
    }
    grid.validate()?;
    let truths: Vec<Arc<GroundTruth>> = (0..grid.trajectories.len())
        .map(|t| ground_truth(&grid.scenario(t * grid.n_scenarios() / grid.trajectories.len(), seed)?))
        .collect::<Result<_>>()?;
    let results: Vec<Result<(ScenarioLabel, Vec<LabeledExample>)>> = (0..grid.n_scenarios())
        .into_par_iter()
        .map(|id| label_scenario(grid, id, &truths[grid.trajectory_index(id)], bound, seed))
        .collect();
    let mut examples = Vec::with_capacity(grid.n_examples());
    let mut labels = Vec::with_capacity(grid.n_scenarios());
    for r in results {
        let (l, ex) = r?;
        labels.push(l);
        examples.extend(ex);
    }
    Ok(Dataset { grid: grid.clone(), bound_mps: bound, seed, examples, labels })
}

/// Stratified split; each class is shuffled and cut at `ratio`. Both parts keep dataset order.
pub fn split(n_labels: &[i8], ratio: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(NavError::InvalidConfig(format!("split ratio {ratio} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [1i8, -1] {
        let mut idx: Vec<usize> = (0..n_labels.len()).filter(|i| n_labels[*i] == class).collect();
        idx.shuffle(&mut rng);
        let cut = (idx.len() as f64 * ratio).round() as usize;
        train.extend_from_slice(&idx[..cut]);
        test.extend_from_slice(&idx[cut..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Stratified `k`-fold assignment; returns the indices of each fold.
pub fn kfold(n_labels: &[i8], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || k > n_labels.len() {
        return Err(NavError::InvalidConfig(format!("cannot make {k} folds from {} examples", n_labels.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for class in [1i8, -1] {
        let mut idx: Vec<usize> = (0..n_labels.len()).filter(|i| n_labels[*i] == class).collect();
        idx.shuffle(&mut rng);
        for i in idx {
            folds[next % k].push(i);
            next += 1;
        }
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

pub const CSV_TAIL: [&str; 4] = ["label_dt_s", "scenario_id", "window_idx", "out_of_bound"];

pub fn write_examples_csv<W: Write>(w: W, examples: &[LabeledExample]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(FEATURE_NAMES.iter().chain(CSV_TAIL.iter()))?;
    for e in examples {
        let mut rec: Vec<String> = e.features.iter().map(|v| v.to_string()).collect();
        rec.push(e.label_dt_s.to_string());
        rec.push(e.scenario_id.to_string());
        rec.push(e.window_idx.to_string());
        rec.push(u8::from(e.out_of_bound).to_string());
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_examples_csv<R: Read>(r: R, path: &str) -> Result<Vec<LabeledExample>> {
    let mut rd = csv::ReaderBuilder::new().flexible(true).from_reader(r);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    let col: HashMap<&str, usize> = header.iter().enumerate().map(|(i, h)| (h.as_str(), i)).collect();
    let find = |name: &str| {
        col.get(name).copied().ok_or_else(|| NavError::Parse {
            path: path.to_string(),
            line: 1,
            message: format!("missing column {name}"),
        })
    };
    let fcols: Vec<usize> = FEATURE_NAMES.iter().map(|n| find(n)).collect::<Result<_>>()?;
    let [lc, sc, wc, oc] = CSV_TAIL.map(find);
    let (lc, sc, wc, oc) = (lc?, sc?, wc?, oc?);
    let mut out = Vec::new();
    for (k, rec) in rd.records().enumerate() {
        let line = k as u64 + 2;
        let rec = rec?;
        let err = |m: String| NavError::Parse { path: path.to_string(), line, message: m };
        let field = |i: usize| rec.get(i).ok_or_else(|| err(format!("missing field {}", header[i])));
        let num = |i: usize| -> Result<f64> {
            let s = field(i)?;
            s.trim().parse::<f64>().map_err(|_| err(format!("bad number {s:?} in {}", header[i])))
        };
        let mut features = [0.0; N_FEATURES];
        for (f, &c) in features.iter_mut().zip(&fcols) {
            *f = num(c)?;
        }
        let label_dt_s = num(lc)?;
        class_of(label_dt_s).map_err(|e| err(e.to_string()))?;
        let int = |i: usize| -> Result<usize> {
            let s = field(i)?;
            s.trim().parse::<usize>().map_err(|_| err(format!("bad integer {s:?} in {}", header[i])))
        };
        out.push(LabeledExample {
            features,
            label_dt_s,
            scenario_id: int(sc)?,
            window_idx: int(wc)?,
            out_of_bound: int(oc)? != 0,
        });
    }
    Ok(out)
}

/// Grid, bound and seed stored next to the examples file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSidecar {
    pub grid: GenerationGrid,
    pub bound_mps: f64,
    pub seed: u64,
    pub n_examples: usize,
    pub n_fine: usize,
    pub n_out_of_bound: usize,
    pub labels: Vec<ScenarioLabel>,
}

impl Dataset {
    pub fn sidecar(&self) -> DatasetSidecar {
        DatasetSidecar {
            grid: self.grid.clone(),
            bound_mps: self.bound_mps,
            seed: self.seed,
            n_examples: self.examples.len(),
            n_fine: self.examples.iter().filter(|e| e.label_dt_s == FINE_DT).count(),
            n_out_of_bound: self.examples.iter().filter(|e| e.out_of_bound).count(),
            labels: self.labels.clone(),
        }
    }

    /// Write `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        let f = std::fs::File::create(dir.join(format!("{stem}.csv")))?;
        write_examples_csv(std::io::BufWriter::new(f), &self.examples)?;
        let json = serde_json::to_string_pretty(&self.sidecar())?;
        std::fs::write(dir.join(format!("{stem}.json")), json + "\n")?;
        Ok(())
    }
}

/// Feature rows and ±1 labels.
pub fn to_xy(examples: &[LabeledExample]) -> (Vec<Vec<f64>>, Vec<i8>) {
    (examples.iter().map(|e| e.features.to_vec()).collect(), examples.iter().map(LabeledExample::class).collect())
}
