//! Experiment orchestration: data preparation, method x seed runs, JSON-lines
//! records and aggregate reports.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::data::{DataError, Part, SplitAssignment, Standardizer, TabularDataset};
use crate::flows::{FlowConfig, FlowError, FlowModel};
use crate::trainer::{
    evaluate, predict, predict_scores, soft_targets, train_llf, train_llf_wo_nll, train_two_stage, RunResult,
    Supervision, Task, TrainConfig, TrainError, TwoStageConfig,
};
use crate::weaksig::{
    avg_classification, avg_regression, synth_classification_signals, synth_regression_signals, BoundConvention,
    ClassificationSignals, LabelScaler, RegressionRuleSignals, SignalError,
};

pub const MODEL_FORMAT: &str = "labelflow-model/v1";

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Llf,
    LlfWoNll,
    LlfTs,
    Avg,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Llf, Method::LlfWoNll, Method::LlfTs, Method::Avg];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Llf => "llf",
            Method::LlfWoNll => "llf_wo_nll",
            Method::LlfTs => "llf_ts",
            Method::Avg => "avg",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.trim().replace('-', "_"))
            .ok_or_else(|| format!("unknown method `{s}` (expected llf|llf_wo_nll|llf_ts|avg)"))
    }
}

/// Where weak signals come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "source")]
pub enum SignalSource {
    /// One labeler (classification) or threshold rule (regression) per
    /// feature index, fitted on the simulation split.
    Synthesize {
        features: Vec<usize>,
        #[serde(default)]
        bound_convention: BoundConvention,
    },
    /// Classification signals aligned to the training split, with optional
    /// bounds sidecar and optional test-split signals (needed by `avg`).
    Files {
        train: PathBuf,
        #[serde(default)]
        bounds: Option<PathBuf>,
        #[serde(default)]
        test: Option<PathBuf>,
    },
    /// Regression rules file written by `synth-signals`.
    Rules { path: PathBuf },
}

fn default_ratio() -> [f64; 3] {
    [4.0, 3.0, 3.0]
}

fn default_seeds() -> Vec<u64> {
    vec![0, 10, 100, 123, 1234]
}

fn default_methods() -> Vec<Method> {
    vec![Method::Llf, Method::Avg]
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    /// Name used in result records; defaults to the dataset file stem.
    #[serde(default)]
    pub name: Option<String>,
    pub task: Task,
    /// Pre-computed split file; when absent the ratio split is used.
    #[serde(default)]
    pub split_file: Option<PathBuf>,
    #[serde(default = "default_ratio")]
    pub split_ratio: [f64; 3],
    #[serde(default)]
    pub split_seed: u64,
    pub signals: SignalSource,
    /// Z-score features with training-split statistics before the flow.
    #[serde(default = "default_true")]
    pub standardize: bool,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub two_stage: TwoStageConfig,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ExperimentError> {
        let cfg: Self = serde_json::from_str(&fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::Config(m.to_string()));
        if self.seeds.is_empty() {
            return bad("seed list is empty");
        }
        if self.methods.is_empty() {
            return bad("method list is empty");
        }
        if self.split_ratio.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return bad("split ratio components must be positive");
        }
        match (&self.signals, self.task) {
            (SignalSource::Rules { .. }, Task::Classification) => return bad("rules files are for regression"),
            (SignalSource::Files { .. }, Task::Regression) => return bad("signal CSV files are for classification"),
            _ => {}
        }
        if self.task == Task::Regression && self.methods.contains(&Method::LlfTs) {
            return bad("llf_ts is defined for classification only");
        }
        self.train.validate()?;
        Ok(())
    }

    pub fn dataset_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            self.dataset
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dataset".into())
        })
    }

    /// Relative paths in the config are taken relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.dataset);
        if let Some(p) = self.split_file.as_mut() {
            fix(p);
        }
        match &mut self.signals {
            SignalSource::Synthesize { .. } => {}
            SignalSource::Files { train, bounds, test } => {
                fix(train);
                if let Some(p) = bounds.as_mut() {
                    fix(p);
                }
                if let Some(p) = test.as_mut() {
                    fix(p);
                }
            }
            SignalSource::Rules { path } => fix(path),
        }
    }
}

/// Regression rules together with the label range used to normalize labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleFile {
    pub label_range: LabelScaler,
    pub rules: RegressionRuleSignals,
}

impl RuleFile {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ExperimentError> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ExperimentError> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// Signals synthesized from the simulation split.
#[derive(Debug, Clone)]
pub enum Synthesized {
    Classification {
        train: ClassificationSignals,
        test: ClassificationSignals,
    },
    Regression(RuleFile),
}

/// Synthesizes signals on `split`. Classification signals are returned for
/// the training and test parts; regression rules keep only those with both
/// groups non-empty on the training part. The regression label range is
/// that of the whole dataset.
pub fn synthesize_signals(
    data: &TabularDataset,
    split: &SplitAssignment,
    task: Task,
    features: &[usize],
    convention: BoundConvention,
) -> Result<Synthesized, ExperimentError> {
    Ok(match task {
        Task::Classification => {
            let labelers = synth_classification_signals(data, split, features, convention)?;
            Synthesized::Classification {
                train: labelers.apply(&data.part(split, Part::Train).features),
                test: labelers.apply(&data.part(split, Part::Test).features),
            }
        }
        Task::Regression => {
            let label_range = LabelScaler::fit(data.labels()?)?;
            let rules = synth_regression_signals(data, split, features, &label_range)?;
            let rules = rules.retain_nonempty(&data.part(split, Part::Train).features);
            Synthesized::Regression(RuleFile { label_range, rules })
        }
    })
}

/// Rules re-expressed for standardized features.
pub fn standardize_rules(rules: &RegressionRuleSignals, st: &Standardizer) -> RegressionRuleSignals {
    let mut out = rules.clone();
    for r in &mut out.rules {
        r.threshold = (r.threshold - st.mean[r.feature]) / st.std[r.feature];
    }
    out
}

/// Everything a method needs, with features already transformed for the
/// flow.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub name: String,
    pub task: Task,
    pub x_train: Array2<f64>,
    pub x_test: Array2<f64>,
    pub y_test: Array1<f64>,
    pub standardizer: Option<Standardizer>,
    pub train_signals: Option<ClassificationSignals>,
    pub test_signals: Option<ClassificationSignals>,
    /// Rules on the flow's (possibly standardized) features.
    pub rules: Option<RuleFile>,
}

pub fn load_split(cfg: &ExperimentConfig, n: usize) -> Result<SplitAssignment, ExperimentError> {
    let split = match &cfg.split_file {
        Some(p) => SplitAssignment::load(p)?,
        None => SplitAssignment::random(n, cfg.split_ratio, cfg.split_seed)?,
    };
    split.check_len(n)?;
    Ok(split)
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<PreparedData, ExperimentError> {
    cfg.validate()?;
    let data = TabularDataset::load_csv(&cfg.dataset)?;
    let split = load_split(cfg, data.len())?;
    let train = data.part(&split, Part::Train);
    let test = data.part(&split, Part::Test);
    if train.is_empty() || test.is_empty() {
        return Err(ExperimentError::Config(
            "training and test parts must be non-empty".into(),
        ));
    }
    let standardizer = cfg.standardize.then(|| Standardizer::fit(&train.features));
    let transform = |x: &Array2<f64>| standardizer.as_ref().map_or_else(|| x.clone(), |s| s.transform(x));
    let (mut train_signals, mut test_signals, mut rules) = (None, None, None);
    match &cfg.signals {
        SignalSource::Synthesize {
            features,
            bound_convention,
        } => match synthesize_signals(&data, &split, cfg.task, features, *bound_convention)? {
            Synthesized::Classification { train, test } => {
                train_signals = Some(train);
                test_signals = Some(test);
            }
            Synthesized::Regression(r) => rules = Some(r),
        },
        SignalSource::Files {
            train: t,
            bounds,
            test: te,
        } => {
            train_signals = Some(ClassificationSignals::load(t, bounds.as_deref(), Some(train.len()))?);
            if let Some(te) = te {
                test_signals = Some(ClassificationSignals::load(te, bounds.as_deref(), Some(test.len()))?);
            }
        }
        SignalSource::Rules { path } => rules = Some(RuleFile::load(path)?),
    }
    if let (Some(r), Some(st)) = (rules.as_mut(), standardizer.as_ref()) {
        r.rules = standardize_rules(&r.rules, st);
    }
    Ok(PreparedData {
        name: cfg.dataset_name(),
        task: cfg.task,
        x_train: transform(&train.features),
        x_test: transform(&test.features),
        y_test: test.labels()?.clone(),
        standardizer,
        train_signals,
        test_signals,
        rules,
    })
}

impl PreparedData {
    pub fn supervision(&self) -> Result<Supervision<'_>, ExperimentError> {
        match self.task {
            Task::Classification => self
                .train_signals
                .as_ref()
                .map(Supervision::Classification)
                .ok_or_else(|| ExperimentError::Config("no training signals".into())),
            Task::Regression => self
                .rules
                .as_ref()
                .map(|r| Supervision::Regression(&r.rules))
                .ok_or_else(|| ExperimentError::Config("no regression rules".into())),
        }
    }

    pub fn flow_config(&self) -> FlowConfig {
        match self.task {
            Task::Classification => FlowConfig::classification(self.x_train.ncols()),
            Task::Regression => FlowConfig::regression(self.x_train.ncols()),
        }
    }

    fn scaler(&self) -> Option<&LabelScaler> {
        self.rules.as_ref().map(|r| &r.label_range)
    }
}

/// One line of the results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub dataset: String,
    pub method: Method,
    pub seed: u64,
    pub metric: Option<f64>,
    pub epochs: usize,
    pub wall_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_violation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_violation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Outcome of one method run, including the training traces when a flow was
/// trained.
#[derive(Debug, Clone)]
pub struct MethodRun {
    pub record: RunRecord,
    pub result: Option<RunResult>,
}

fn train_flow(
    data: &PreparedData,
    cfg: &TrainConfig,
    with_nll: bool,
) -> Result<(FlowModel, RunResult), ExperimentError> {
    let sup = data.supervision()?;
    let flow_cfg = data.flow_config();
    let out = if with_nll {
        train_llf(data.x_train.view(), sup, &flow_cfg, cfg)?
    } else {
        train_llf_wo_nll(data.x_train.view(), sup, &flow_cfg, cfg)?
    };
    Ok(out)
}

fn run_method_inner(
    data: &PreparedData,
    method: Method,
    cfg: &TrainConfig,
    two_stage: &TwoStageConfig,
) -> Result<(Array1<f64>, Option<RunResult>), ExperimentError> {
    match method {
        Method::Avg => {
            let preds = match data.task {
                Task::Classification => {
                    let s = data
                        .test_signals
                        .as_ref()
                        .ok_or_else(|| ExperimentError::Config("avg needs test-split signals".into()))?;
                    avg_classification(s)
                }
                Task::Regression => {
                    let r = data
                        .rules
                        .as_ref()
                        .ok_or_else(|| ExperimentError::Config("no regression rules".into()))?;
                    r.label_range.denormalize(&avg_regression(&r.rules, &data.x_test))
                }
            };
            Ok((preds, None))
        }
        Method::Llf | Method::LlfWoNll => {
            let (model, result) = train_flow(data, cfg, method == Method::Llf)?;
            let preds = predict(&model, data.x_test.view(), cfg.predict_samples, cfg.seed, data.scaler())?;
            Ok((preds, Some(result)))
        }
        Method::LlfTs => {
            let (model, result) = train_flow(data, cfg, true)?;
            let scores = predict_scores(&model, data.x_train.view(), cfg.predict_samples, cfg.seed)?;
            let ts = TwoStageConfig {
                seed: cfg.seed,
                ..*two_stage
            };
            let clf = train_two_stage(data.x_train.view(), soft_targets(scores.view()).view(), &ts)?;
            Ok((clf.predict(data.x_test.view()), Some(result)))
        }
    }
}

/// Runs one method with one seed. Failures are captured in the record.
pub fn run_method(data: &PreparedData, method: Method, cfg: &TrainConfig, two_stage: &TwoStageConfig) -> MethodRun {
    let start = Instant::now();
    let outcome = run_method_inner(data, method, cfg, two_stage)
        .and_then(|(preds, result)| Ok((evaluate(preds.view(), data.y_test.view(), data.task)?, preds, result)));
    let wall_s = start.elapsed().as_secs_f64();
    let mut record = RunRecord {
        dataset: data.name.clone(),
        method,
        seed: cfg.seed,
        metric: None,
        epochs: 0,
        wall_s,
        initial_violation: None,
        final_violation: None,
        error: None,
    };
    match outcome {
        Ok((metric, preds, mut result)) => {
            record.metric = Some(metric);
            if let Some(r) = result.as_mut() {
                record.epochs = r.epochs;
                record.initial_violation = r.violations.first().copied();
                record.final_violation = r.violations.last().copied();
                r.metric = Some(metric);
                r.predictions = Some(preds.to_vec());
            }
            MethodRun { record, result }
        }
        Err(e) => {
            log::warn!("{} {} seed {} failed: {e}", data.name, method, cfg.seed);
            if let ExperimentError::Train(TrainError::NonFinite { epoch, .. }) = &e {
                record.epochs = *epoch;
            }
            record.error = Some(e.to_string());
            MethodRun { record, result: None }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    /// Metric per declared seed; `None` marks a failed run.
    pub per_seed: Vec<(u64, Option<f64>)>,
    /// Over successful runs only.
    pub mean: Option<f64>,
    /// Population standard deviation over successful runs.
    pub std: Option<f64>,
    pub missing: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub dataset: String,
    pub task: Task,
    pub methods: Vec<MethodSummary>,
}

pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

/// Groups records by method, keeping the declared method and seed order.
pub fn aggregate(
    dataset: &str,
    task: Task,
    methods: &[Method],
    seeds: &[u64],
    records: &[RunRecord],
) -> AggregateReport {
    let mut by_key: BTreeMap<(Method, u64), Option<f64>> = BTreeMap::new();
    for r in records {
        by_key.insert((r.method, r.seed), r.metric);
    }
    let methods = methods
        .iter()
        .map(|&method| {
            let per_seed: Vec<(u64, Option<f64>)> = seeds
                .iter()
                .map(|&s| (s, by_key.get(&(method, s)).copied().flatten()))
                .collect();
            let ok: Vec<f64> = per_seed.iter().filter_map(|(_, m)| *m).collect();
            let stats = mean_std(&ok);
            MethodSummary {
                method,
                missing: per_seed.len() - ok.len(),
                per_seed,
                mean: stats.map(|s| s.0),
                std: stats.map(|s| s.1),
            }
        })
        .collect();
    AggregateReport {
        dataset: dataset.to_string(),
        task,
        methods,
    }
}

impl AggregateReport {
    fn decimals(&self) -> usize {
        match self.task {
            Task::Classification => 1,
            Task::Regression => 3,
        }
    }

    /// `mean_{std}` cell; `--` when every run failed.
    pub fn cell(&self, m: &MethodSummary) -> String {
        let d = self.decimals();
        match (m.mean, m.std) {
            (Some(mean), Some(std)) => format!("{mean:.d$}_{{{std:.d$}}}"),
            _ => "--".into(),
        }
    }

    pub fn to_text(&self, header: &str) -> String {
        let metric = match self.task {
            Task::Classification => "accuracy (%)",
            Task::Regression => "RMSE",
        };
        let mut out = String::new();
        for line in header.lines() {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
        out.push_str(&format!("dataset: {}\nmetric: {metric}\n\n", self.dataset));
        out.push_str(&format!(
            "{:<12} {:>14} {:>8}  per-seed\n",
            "method", "mean_{std}", "missing"
        ));
        for m in &self.methods {
            let seeds: Vec<String> = m
                .per_seed
                .iter()
                .map(|(s, v)| match v {
                    Some(v) => format!("{s}:{v:.prec$}", prec = self.decimals() + 2),
                    None => format!("{s}:--"),
                })
                .collect();
            out.push_str(&format!(
                "{:<12} {:>14} {:>8}  {}\n",
                m.method.name(),
                self.cell(m),
                m.missing,
                seeds.join(" ")
            ));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let seeds: Vec<String> = self
            .methods
            .first()
            .map(|m| m.per_seed.iter().map(|(s, _)| format!("seed_{s}")).collect())
            .unwrap_or_default();
        let mut out = format!("dataset,method,mean,std,missing,{}\n", seeds.join(","));
        let fmt_opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for m in &self.methods {
            let vals: Vec<String> = m.per_seed.iter().map(|(_, v)| fmt_opt(*v)).collect();
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                self.dataset,
                m.method.name(),
                fmt_opt(m.mean),
                fmt_opt(m.std),
                m.missing,
                vals.join(",")
            ));
        }
        out
    }
}

/// Appends records to a JSON-lines file through a single writer.
pub struct ResultsWriter {
    out: BufWriter<File>,
}

impl ResultsWriter {
    pub fn create(path: impl AsRef<Path>) -> Result<Self, ExperimentError> {
        Ok(Self {
            out: BufWriter::new(File::create(path)?),
        })
    }

    pub fn write(&mut self, record: &RunRecord) -> Result<(), ExperimentError> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        Ok(())
    }
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<RunRecord>, ExperimentError> {
    fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

/// Runs every method for every seed on data prepared once, writing
/// `results.jsonl`, `report.txt` and `report.csv` into `out_dir`.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<AggregateReport, ExperimentError> {
    let data = prepare(cfg)?;
    fs::create_dir_all(out_dir)?;
    let mut writer = ResultsWriter::create(out_dir.join("results.jsonl"))?;
    let mut records = Vec::new();
    for &method in &cfg.methods {
        for &seed in &cfg.seeds {
            let train = TrainConfig { seed, ..cfg.train };
            let run = run_method(&data, method, &train, &cfg.two_stage);
            log::info!(
                "{} {} seed {}: metric {:?} after {} epochs ({:.1}s)",
                data.name,
                method,
                seed,
                run.record.metric,
                run.record.epochs,
                run.record.wall_s
            );
            writer.write(&run.record)?;
            records.push(run.record);
        }
    }
    let report = aggregate(&data.name, cfg.task, &cfg.methods, &cfg.seeds, &records);
    let header = format!("config: {}", serde_json::to_string(cfg)?);
    fs::write(out_dir.join("report.txt"), report.to_text(&header))?;
    fs::write(out_dir.join("report.csv"), report.to_csv())?;
    Ok(report)
}

/// A trained flow with the feature and label transforms it was trained
/// under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub format: String,
    pub task: Task,
    pub standardizer: Option<Standardizer>,
    pub label_range: Option<LabelScaler>,
    pub flow: serde_json::Value,
}

impl ModelBundle {
    pub fn new(
        model: &FlowModel,
        task: Task,
        standardizer: Option<Standardizer>,
        label_range: Option<LabelScaler>,
    ) -> Result<Self, ExperimentError> {
        Ok(Self {
            format: MODEL_FORMAT.to_string(),
            task,
            standardizer,
            label_range,
            flow: serde_json::from_str(&model.to_json()?)?,
        })
    }

    pub fn model(&self) -> Result<FlowModel, ExperimentError> {
        Ok(FlowModel::from_json(&self.flow.to_string())?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ExperimentError> {
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ExperimentError> {
        let b: Self = serde_json::from_str(&fs::read_to_string(path)?)?;
        if b.format != MODEL_FORMAT {
            return Err(ExperimentError::Config(format!("unknown model format `{}`", b.format)));
        }
        Ok(b)
    }

    /// Predictions for raw features.
    pub fn predict(&self, x: &Array2<f64>, samples: usize, seed: u64) -> Result<Array1<f64>, ExperimentError> {
        let model = self.model()?;
        let x = self.standardizer.as_ref().map_or_else(|| x.clone(), |s| s.transform(x));
        Ok(predict(&model, x.view(), samples, seed, self.label_range.as_ref())?)
    }
}
