//! Command-line front end. Every command writes its artifacts and a
//! `manifest.json` describing inputs, seed and output digests.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::adaptive::{LearnedPolicy, HISTORY_LEN};
use crate::dataset::{self, generate_dataset, GenerationGrid, LabeledExample};
use crate::error::{NavError, Result};
use crate::io::{export_log, read_log, write_csv, write_json, write_log, ReplaySource};
use crate::learning::features::{FEATURE_NAMES, WINDOW_LEN};
use crate::learning::metrics::{evaluate, EvalReport, RocPoint};
use crate::learning::mrmr::{mrmr_rank, DEFAULT_BINS};
use crate::learning::svm::{train_svm, Kernel, SvmModel, SvmParams};
use crate::learning::{COARSE_DT, FINE_DT};
use crate::sim::config::ScenarioConfig;
use crate::sim::runner::{
    feature_context, ground_truth, monte_carlo_with_truth, navigate, run_with_truth, RunOptions, StepSizePolicy,
};
use crate::sim::sweep::{sweep_step_sizes, CANDIDATES, DEFAULT_BOUND};

#[derive(Debug, Parser)]
#[command(name = "stepnav", version, about = "Velocity-aided INS with learned adaptive step size")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Scenario configuration (TOML or JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Master seed; overrides the configuration.
    #[arg(long, global = true, env = "STEPNAV_SEED")]
    pub seed: Option<u64>,
    /// Worker threads for Monte-Carlo runs and dataset generation.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum Command {
    /// Run a scenario under one policy, with optional Monte-Carlo averaging.
    Simulate(SimulateArgs),
    /// Error versus step size over a candidate set.
    Sweep(SweepArgs),
    /// Generate a labeled step-size dataset.
    GenDataset(GenDatasetArgs),
    /// Train the step-size classifier.
    Train(TrainArgs),
    /// Rank features by minimum redundancy, maximum relevance.
    Rank(RankArgs),
    /// Evaluate a trained model on a dataset.
    Evaluate(EvaluateArgs),
    /// Run a scenario under the learned policy.
    RunAdaptive(RunAdaptiveArgs),
    /// Replay a recorded sensor log through the filter.
    Replay(ReplayArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct PolicyArgs {
    /// fixed:<dt>, speed:<threshold> or learned:<model.json>.
    #[arg(long)]
    pub policy: Option<String>,
    /// Disable the switching hysteresis of the learned policy.
    #[arg(long)]
    pub no_hysteresis: bool,
    /// Initial step of the learned policy (s).
    #[arg(long, default_value_t = FINE_DT)]
    pub initial_dt: f64,
    /// Prediction period of the learned policy (s); defaults to the aiding interval.
    #[arg(long)]
    pub tuning_rate: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub policy: PolicyArgs,
    /// Monte-Carlo runs; overrides the configuration.
    #[arg(long)]
    pub mc: Option<usize>,
    /// Also write the run-0 sensor log for replay.
    #[arg(long)]
    pub export_log: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    /// Comma-separated candidate step sizes (s).
    #[arg(long, value_delimiter = ',')]
    pub candidates: Option<Vec<f64>>,
    #[arg(long, default_value_t = DEFAULT_BOUND)]
    pub bound: f64,
    #[arg(long)]
    pub mc: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct GenDatasetArgs {
    /// Grid file (TOML or JSON); overrides --scale.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Built-in grid: desk (2,000 examples) or full.
    #[arg(long, default_value = "desk")]
    pub scale: String,
    #[arg(long, default_value_t = DEFAULT_BOUND)]
    pub bound: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value = "linear")]
    pub kernel: String,
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    /// Training fraction of the stratified split.
    #[arg(long, default_value_t = 0.8)]
    pub split: f64,
    /// Cross-validation folds (0 disables).
    #[arg(long, default_value_t = 5)]
    pub kfold: usize,
    /// Keep examples whose scenario missed the bound even at the fine step.
    #[arg(long)]
    pub include_out_of_bound: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct RankArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: usize,
    #[arg(long)]
    pub include_out_of_bound: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub include_out_of_bound: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct RunAdaptiveArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub no_hysteresis: bool,
    #[arg(long, default_value_t = FINE_DT)]
    pub initial_dt: f64,
    #[arg(long)]
    pub tuning_rate: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub log: PathBuf,
    #[command(flatten)]
    pub policy: PolicyArgs,
}

#[derive(Debug, Serialize)]
struct FileDigest {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a Command,
    seed: Option<u64>,
    config_sha256: Option<String>,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn digest_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
    inputs: Vec<PathBuf>,
}

impl Outputs {
    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }
}

/// Attach the offending path to I/O errors.
fn at<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        NavError::Io(io) => NavError::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        other => other,
    })
}

fn load_config(cli: &Cli) -> Result<ScenarioConfig> {
    let path =
        cli.config.as_ref().ok_or_else(|| NavError::InvalidConfig("--config is required for this command".into()))?;
    let mut c = at(path, ScenarioConfig::load(path))?;
    if let Some(seed) = cli.seed {
        c.seed = seed;
    }
    Ok(c)
}

fn load_model(path: &Path) -> Result<SvmModel> {
    SvmModel::from_json(&at(path, std::fs::read_to_string(path).map_err(NavError::from))?)
}

fn parse_policy(args: &PolicyArgs, config: &ScenarioConfig, inputs: &mut Vec<PathBuf>) -> Result<StepSizePolicy> {
    let spec = args.policy.clone().unwrap_or_else(|| format!("fixed:{}", config.dt));
    let (kind, value) =
        spec.split_once(':').ok_or_else(|| NavError::InvalidConfig(format!("policy {spec:?} is not kind:value")))?;
    let num =
        |v: &str| v.parse::<f64>().map_err(|_| NavError::InvalidConfig(format!("bad number {v:?} in policy {spec:?}")));
    match kind {
        "fixed" => Ok(StepSizePolicy::Fixed(num(value)?)),
        "speed" => Ok(StepSizePolicy::SpeedThreshold { v_thresh: num(value)?, dt_min: FINE_DT, dt_max: COARSE_DT }),
        "learned" => {
            let path = PathBuf::from(value);
            let model = load_model(&path)?;
            inputs.push(path);
            Ok(StepSizePolicy::Learned(learned(
                Arc::new(model),
                !args.no_hysteresis,
                args.initial_dt,
                args.tuning_rate,
            )))
        }
        _ => Err(NavError::InvalidConfig(format!("unknown policy kind {kind:?} (fixed, speed, learned)"))),
    }
}

fn learned(model: Arc<SvmModel>, hysteresis: bool, initial_dt: f64, tuning_rate: Option<f64>) -> LearnedPolicy {
    LearnedPolicy {
        model: Some(model),
        initial_dt,
        tuning_rate,
        hysteresis,
        history_len: HISTORY_LEN,
        window: WINDOW_LEN,
    }
}

fn load_examples(path: &Path, include_oob: bool) -> Result<Vec<LabeledExample>> {
    let f = at(path, std::fs::File::open(path).map_err(NavError::from))?;
    let all = dataset::read_examples_csv(std::io::BufReader::new(f), &path.display().to_string())?;
    Ok(all.into_iter().filter(|e| include_oob || !e.out_of_bound).collect())
}

#[derive(Debug, Serialize)]
struct RocRow {
    fpr: f64,
    tpr: f64,
    threshold: f64,
}

fn roc_rows(roc: &[RocPoint]) -> Vec<RocRow> {
    roc.iter().map(|p| RocRow { fpr: p.fpr, tpr: p.tpr, threshold: p.threshold }).collect()
}

#[derive(Debug, Serialize)]
struct Summary {
    accuracy: f64,
    auc: f64,
    tp: usize,
    tn: usize,
    fp: usize,
    #[serde(rename = "fn")]
    fn_: usize,
    n: usize,
}

impl Summary {
    fn of(r: &EvalReport) -> Self {
        Self {
            accuracy: r.accuracy,
            auc: r.auc,
            tp: r.tp,
            tn: r.tn,
            fp: r.fp,
            fn_: r.fn_,
            n: r.tp + r.tn + r.fp + r.fn_,
        }
    }
}

fn eval_model(model: &SvmModel, x: &[Vec<f64>], y: &[i8]) -> Result<EvalReport> {
    let scores = x.iter().map(|r| model.decision(r)).collect::<Result<Vec<_>>>()?;
    let pos: Vec<bool> = y.iter().map(|v| *v == 1).collect();
    evaluate(&scores, &pos)
}

fn pick<T: Clone>(v: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|i| v[*i].clone()).collect()
}

#[derive(Debug, Serialize)]
struct CvReport {
    folds: Vec<Summary>,
    mean_accuracy: f64,
    mean_auc: f64,
}

#[derive(Debug, Serialize)]
struct TrainReport {
    n_examples: usize,
    n_train: usize,
    n_test: usize,
    test: Summary,
    #[serde(skip_serializing_if = "Option::is_none")]
    cross_validation: Option<CvReport>,
}

/// Train on the training part of a stratified split and evaluate on the rest.
pub fn train_and_report(
    examples: &[LabeledExample],
    params: &SvmParams,
    ratio: f64,
    seed: u64,
) -> Result<(SvmModel, EvalReport)> {
    let (x, y) = dataset::to_xy(examples);
    let (tr, te) = dataset::split(&y, ratio, seed)?;
    let model = train_svm(&pick(&x, &tr), &pick(&y, &tr), params)?;
    let test = eval_model(&model, &pick(&x, &te), &pick(&y, &te))?;
    Ok((model, test))
}

/// Per-fold reports of `k`-fold cross-validation.
pub fn cross_validate(x: &[Vec<f64>], y: &[i8], params: &SvmParams, k: usize, seed: u64) -> Result<Vec<EvalReport>> {
    let folds = dataset::kfold(y, k, seed)?;
    use rayon::prelude::*;
    folds
        .par_iter()
        .map(|test| {
            let train: Vec<usize> = (0..y.len()).filter(|i| test.binary_search(i).is_err()).collect();
            let m = train_svm(&pick(x, &train), &pick(y, &train), params)?;
            eval_model(&m, &pick(x, test), &pick(y, test))
        })
        .collect()
}

/// Run the parsed command; returns the written file names.
pub fn run(cli: &Cli) -> Result<Vec<String>> {
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(NavError::InvalidConfig("--jobs must be at least 1".into()));
        }
        // fails only if a pool already exists, which is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
    }
    std::fs::create_dir_all(&cli.out)?;
    let mut out = Outputs { dir: cli.out.clone(), files: Vec::new(), inputs: Vec::new() };
    let mut config_sha = None;
    let mut seed = cli.seed;
    if let Some(p) = &cli.config {
        out.inputs.push(p.clone());
    }

    match &cli.command {
        Command::Simulate(a) => {
            let mut c = load_config(cli)?;
            if let Some(n) = a.mc {
                c.mc_n = n;
            }
            let policy = parse_policy(&a.policy, &c, &mut out.inputs)?;
            let gt = ground_truth(&c)?;
            let opts = RunOptions { record_trace: true, check_health: true, ..RunOptions::default() };
            let first = run_with_truth(&c, gt.clone(), &policy, 0, opts)?;
            let mc = monte_carlo_with_truth(&c, gt, &policy, c.mc_n)?;
            write_json(&out.path("metrics.json"), &mc.mean)?;
            write_csv(&out.path("runs.csv"), &mc.runs)?;
            write_csv(&out.path("trace.csv"), &first.trace)?;
            write_csv(&out.path("timeline.csv"), &first.timeline)?;
            write_json(&out.path("health.json"), &first.health)?;
            if a.export_log {
                let rows = export_log(&c, 0)?;
                let f = std::fs::File::create(out.path("log.csv"))?;
                write_log(std::io::BufWriter::new(f), &rows)?;
            }
            seed = Some(c.seed);
            config_sha = Some(sha256_hex(c.to_toml_string().as_bytes()));
        }
        Command::Sweep(a) => {
            let c = load_config(cli)?;
            let cands = a.candidates.clone().unwrap_or_else(|| CANDIDATES.to_vec());
            let r = sweep_step_sizes(&c, &cands, a.bound, a.mc.unwrap_or(c.mc_n))?;
            write_csv(&out.path("sweep.csv"), &r.rows)?;
            write_json(&out.path("sweep.json"), &r)?;
            seed = Some(c.seed);
            config_sha = Some(sha256_hex(c.to_toml_string().as_bytes()));
        }
        Command::GenDataset(a) => {
            let grid = match &a.grid {
                Some(p) => {
                    out.inputs.push(p.clone());
                    let text = at(p, std::fs::read_to_string(p).map_err(NavError::from))?;
                    if p.extension().is_some_and(|e| e == "json") {
                        serde_json::from_str(&text)?
                    } else {
                        toml::from_str(&text)?
                    }
                }
                None => match a.scale.as_str() {
                    "desk" => GenerationGrid::desk(),
                    "full" => GenerationGrid::full(),
                    s => return Err(NavError::InvalidConfig(format!("unknown scale {s:?} (desk, full)"))),
                },
            };
            let s = cli.seed.unwrap_or(1);
            let d = generate_dataset(&grid, a.bound, s)?;
            out.files.push("dataset.csv".into());
            out.files.push("dataset.json".into());
            d.save(&out.dir, "dataset")?;
            seed = Some(s);
        }
        Command::Train(a) => {
            out.inputs.push(a.dataset.clone());
            let s = cli.seed.unwrap_or(1);
            let ex = load_examples(&a.dataset, a.include_out_of_bound)?;
            let params = SvmParams { kernel: a.kernel.parse::<Kernel>()?, c: a.c, ..SvmParams::default() };
            let (x, y) = dataset::to_xy(&ex);
            let (tr, te) = dataset::split(&y, a.split, s)?;
            let mut model = train_svm(&pick(&x, &tr), &pick(&y, &tr), &params)?;
            model.training.dataset_sha256 = digest_file(&a.dataset)?;
            model.training.seed = s;
            let test = eval_model(&model, &pick(&x, &te), &pick(&y, &te))?;
            let cross_validation = if a.kfold > 1 {
                let folds = cross_validate(&x, &y, &params, a.kfold, s)?;
                let k = folds.len() as f64;
                Some(CvReport {
                    mean_accuracy: folds.iter().map(|r| r.accuracy).sum::<f64>() / k,
                    mean_auc: folds.iter().map(|r| r.auc).sum::<f64>() / k,
                    folds: folds.iter().map(Summary::of).collect(),
                })
            } else {
                None
            };
            std::fs::write(out.path("model.json"), model.to_json() + "\n")?;
            write_json(
                &out.path("train_report.json"),
                &TrainReport {
                    n_examples: ex.len(),
                    n_train: tr.len(),
                    n_test: te.len(),
                    test: Summary::of(&test),
                    cross_validation,
                },
            )?;
            write_csv(&out.path("roc.csv"), &roc_rows(&test.roc))?;
            seed = Some(s);
        }
        Command::Rank(a) => {
            out.inputs.push(a.dataset.clone());
            let ex = load_examples(&a.dataset, a.include_out_of_bound)?;
            let (x, y) = dataset::to_xy(&ex);
            let ranked = mrmr_rank(&x, &y, &FEATURE_NAMES, a.bins)?;
            write_csv(&out.path("ranking.csv"), &ranked)?;
            write_json(&out.path("ranking.json"), &ranked)?;
        }
        Command::Evaluate(a) => {
            out.inputs.push(a.model.clone());
            out.inputs.push(a.dataset.clone());
            let model = load_model(&a.model)?;
            let ex = load_examples(&a.dataset, a.include_out_of_bound)?;
            let (x, y) = dataset::to_xy(&ex);
            let r = eval_model(&model, &x, &y)?;
            write_json(&out.path("eval.json"), &Summary::of(&r))?;
            write_csv(&out.path("roc.csv"), &roc_rows(&r.roc))?;
        }
        Command::RunAdaptive(a) => {
            out.inputs.push(a.model.clone());
            let c = load_config(cli)?;
            let model = Arc::new(load_model(&a.model)?);
            let gt = ground_truth(&c)?;
            let policy = StepSizePolicy::Learned(learned(model, !a.no_hysteresis, a.initial_dt, a.tuning_rate));
            let opts = RunOptions { record_trace: true, check_health: true, ..RunOptions::default() };
            let r = run_with_truth(&c, gt, &policy, 0, opts)?;
            write_json(&out.path("metrics.json"), &r.metrics)?;
            write_csv(&out.path("timeline.csv"), &r.timeline)?;
            write_csv(&out.path("trace.csv"), &r.trace)?;
            seed = Some(c.seed);
            config_sha = Some(sha256_hex(c.to_toml_string().as_bytes()));
        }
        Command::Replay(a) => {
            out.inputs.push(a.log.clone());
            let c = load_config(cli)?;
            let policy = parse_policy(&a.policy, &c, &mut out.inputs)?;
            let f = at(&a.log, std::fs::File::open(&a.log).map_err(NavError::from))?;
            let rows = read_log(std::io::BufReader::new(f), &a.log.display().to_string())?;
            let mut src = ReplaySource::new(rows, &c)?;
            let opts = RunOptions { record_trace: true, check_health: true, ..RunOptions::default() };
            let r = navigate(&mut src, c.filter_config()?, &policy, feature_context(&c)?, c.dtau_ticks()?, opts)?;
            write_json(&out.path("metrics.json"), &r.metrics)?;
            write_csv(&out.path("timeline.csv"), &r.timeline)?;
            write_csv(&out.path("trace.csv"), &r.trace)?;
            config_sha = Some(sha256_hex(c.to_toml_string().as_bytes()));
        }
    }

    let inputs = out
        .inputs
        .iter()
        .map(|p| Ok(FileDigest { path: p.display().to_string(), sha256: digest_file(p)? }))
        .collect::<Result<Vec<_>>>()?;
    let outputs = out
        .files
        .iter()
        .map(|f| Ok(FileDigest { path: f.clone(), sha256: digest_file(&out.dir.join(f))? }))
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        tool: "stepnav",
        version: env!("CARGO_PKG_VERSION"),
        command: &cli.command,
        seed,
        config_sha256: config_sha,
        inputs,
        outputs,
    };
    write_json(&out.dir.join("manifest.json"), &manifest)?;
    let mut files = out.files;
    files.push("manifest.json".into());
    Ok(files)
}

/// Machine-readable error report for stderr.
pub fn error_json(e: &NavError) -> String {
    serde_json::json!({ "error": { "kind": e.kind(), "message": e.to_string() } }).to_string()
}
