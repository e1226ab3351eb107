//! `labelflow`: split datasets, synthesize weak signals, train and apply label
//! flows, and run the multi-seed experiment protocol.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use labelflow::data::{Part, SplitAssignment, Standardizer, TabularDataset};
use labelflow::experiment::{self, ExperimentConfig, ModelBundle, RuleFile, Synthesized};
use labelflow::flows::FlowConfig;
use labelflow::theory;
use labelflow::trainer::{self, Supervision, Task, TrainConfig};
use labelflow::weaksig::{BoundConvention, ClassificationSignals};
use ndarray::Array1;

#[derive(Parser)]
#[command(
    name = "labelflow",
    version,
    about = "Weakly supervised learning with label learning flows"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Shuffle a dataset into train/sim/test parts.
    Split(SplitArgs),
    /// Fit weak labelers (or threshold rules) on the simulation part.
    SynthSignals(SynthArgs),
    /// Train one flow and save it with its feature/label transforms.
    Train(TrainArgs),
    /// Predict labels for one part of a dataset with a saved model.
    Predict(PredictArgs),
    /// Score a predictions file against gold labels.
    Evaluate(EvaluateArgs),
    /// Run every configured method for every seed and aggregate.
    Run(RunArgs),
    /// Check the dequantization bound on random one-dimensional flows.
    TheoremCheck(TheoremArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Classification,
    Regression,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Classification => Task::Classification,
            TaskArg::Regression => Task::Regression,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ConventionArg {
    ExpectedError,
    ClassConditional,
}

impl From<ConventionArg> for BoundConvention {
    fn from(c: ConventionArg) -> Self {
        match c {
            ConventionArg::ExpectedError => BoundConvention::ExpectedError,
            ConventionArg::ClassConditional => BoundConvention::ClassConditional,
        }
    }
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// `train:sim:test` proportions.
    #[arg(long, default_value = "4:3:3")]
    ratio: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    split: PathBuf,
    #[arg(long, value_enum)]
    task: TaskArg,
    /// Comma-separated feature indices, one signal per feature.
    #[arg(long, value_delimiter = ',', required = true)]
    features: Vec<usize>,
    #[arg(long, value_enum, default_value = "expected-error")]
    bound_convention: ConventionArg,
    /// Receives `signals_train.csv`, `signals_test.csv` and `bounds.csv`, or
    /// `rules.json` for regression.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    split: PathBuf,
    #[arg(long, value_enum)]
    task: TaskArg,
    /// Classification signals for the training part.
    #[arg(long, required_if_eq("task", "classification"))]
    signals: Option<PathBuf>,
    /// Bounds sidecar; every bound defaults to 0.01 without it.
    #[arg(long)]
    bounds: Option<PathBuf>,
    /// Regression rules written by `synth-signals`.
    #[arg(long, required_if_eq("task", "regression"))]
    rules: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2000)]
    max_epochs: usize,
    /// Train on the penalty terms only.
    #[arg(long)]
    no_nll: bool,
    /// Use raw features instead of z-scored ones.
    #[arg(long)]
    no_standardize: bool,
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch loss and violation CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    split: PathBuf,
    #[arg(long, default_value = "test")]
    part: Part,
    #[arg(long, default_value_t = 10)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    split: PathBuf,
    #[arg(long, default_value = "test")]
    part: Part,
    #[arg(long, value_enum)]
    task: TaskArg,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Receives `results.jsonl`, `report.txt` and `report.csv`.
    #[arg(long, default_value = "results")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct TheoremArgs {
    #[arg(long, default_value_t = 51)]
    instances: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the table as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_ratio(s: &str) -> Result<[f64; 3]> {
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("ratio `{s}` is not of the form a:b:c"))?;
    match parts.as_slice() {
        [a, b, c] => Ok([*a, *b, *c]),
        _ => bail!("ratio `{s}` needs three components"),
    }
}

fn split(args: SplitArgs) -> Result<()> {
    let data = TabularDataset::load_csv(&args.dataset)?;
    let split = SplitAssignment::random(data.len(), parse_ratio(&args.ratio)?, args.seed)?;
    split.save(&args.out)?;
    println!(
        "train {} / sim {} / test {}",
        split.count(Part::Train),
        split.count(Part::Sim),
        split.count(Part::Test)
    );
    Ok(())
}

fn load_with_split(dataset: &Path, split: &Path) -> Result<(TabularDataset, SplitAssignment)> {
    let data = TabularDataset::load_csv(dataset)?;
    let split = SplitAssignment::load(split)?;
    split.check_len(data.len())?;
    Ok((data, split))
}

fn synth_signals(args: SynthArgs) -> Result<()> {
    let (data, split) = load_with_split(&args.dataset, &args.split)?;
    fs::create_dir_all(&args.out_dir)?;
    match experiment::synthesize_signals(
        &data,
        &split,
        args.task.into(),
        &args.features,
        args.bound_convention.into(),
    )? {
        Synthesized::Classification { train, test } => {
            let bounds = args.out_dir.join("bounds.csv");
            train.save(args.out_dir.join("signals_train.csv"), Some(&bounds))?;
            test.save(args.out_dir.join("signals_test.csv"), None)?;
            for (m, b) in train.bounds().iter().enumerate() {
                println!("signal_{}: bounds {:.4} {:.4}", m + 1, b[0], b[1]);
            }
        }
        Synthesized::Regression(rules) => {
            rules.save(args.out_dir.join("rules.json"))?;
            println!("{} rules kept", rules.rules.rules.len());
        }
    }
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    let (data, split) = load_with_split(&args.dataset, &args.split)?;
    let part = data.part(&split, Part::Train);
    let standardizer = (!args.no_standardize).then(|| Standardizer::fit(&part.features));
    let x = standardizer
        .as_ref()
        .map_or_else(|| part.features.clone(), |s| s.transform(&part.features));
    let mut cfg = TrainConfig {
        seed: args.seed,
        max_epochs: args.max_epochs,
        ..Default::default()
    };
    cfg.penalty.include_nll = !args.no_nll;
    let task: Task = args.task.into();
    let (model, result, label_range) = match task {
        Task::Classification => {
            let path = args
                .signals
                .as_ref()
                .context("--signals is required for classification")?;
            let signals = ClassificationSignals::load(path, args.bounds.as_deref(), Some(part.len()))?;
            let (m, r) = trainer::train_llf(
                x.view(),
                Supervision::Classification(&signals),
                &FlowConfig::classification(x.ncols()),
                &cfg,
            )?;
            (m, r, None)
        }
        Task::Regression => {
            let path = args.rules.as_ref().context("--rules is required for regression")?;
            let mut rules = RuleFile::load(path)?;
            if let Some(st) = &standardizer {
                rules.rules = experiment::standardize_rules(&rules.rules, st);
            }
            let (m, r) = trainer::train_llf(
                x.view(),
                Supervision::Regression(&rules.rules),
                &FlowConfig::regression(x.ncols()),
                &cfg,
            )?;
            (m, r, Some(rules.label_range))
        }
    };
    ModelBundle::new(&model, task, standardizer, label_range)?.save(&args.out)?;
    if let Some(trace) = &args.trace {
        let mut w = csv_writer(trace)?;
        w.write_record(["epoch", "loss", "violation"])?;
        for (e, (l, v)) in result.losses.iter().zip(&result.violations).enumerate() {
            w.write_record([e.to_string(), l.to_string(), v.to_string()])?;
        }
        w.flush()?;
    }
    println!(
        "trained {} epochs in {:.1}s; loss {:.4} -> {:.4}; violation {:.4} -> {:.4}",
        result.epochs,
        result.wall_s,
        result.losses[0],
        result.losses[result.epochs - 1],
        result.violations[0],
        result.violations[result.epochs - 1]
    );
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))
}

fn predict(args: PredictArgs) -> Result<()> {
    let bundle = ModelBundle::load(&args.model)?;
    let (data, split) = load_with_split(&args.dataset, &args.split)?;
    let part = data.part(&split, args.part);
    let preds = bundle.predict(&part.features, args.samples, args.seed)?;
    let mut w = csv_writer(&args.out)?;
    w.write_record(["prediction"])?;
    for p in &preds {
        w.write_record([p.to_string()])?;
    }
    w.flush()?;
    println!("{} predictions written", preds.len());
    Ok(())
}

fn read_predictions(path: &Path) -> Result<Array1<f64>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    if reader.headers()?.iter().map(str::trim).ne(["prediction"]) {
        bail!("predictions file must have the single header `prediction`");
    }
    reader
        .records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec?;
            let cell = rec.get(0).unwrap_or("").trim();
            cell.parse::<f64>()
                .with_context(|| format!("row {}: `{cell}` is not a number", i + 2))
        })
        .collect()
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let (data, split) = load_with_split(&args.dataset, &args.split)?;
    let part = data.part(&split, args.part);
    let preds = read_predictions(&args.predictions)?;
    let task: Task = args.task.into();
    let metric = trainer::evaluate(preds.view(), part.labels()?.view(), task)?;
    match task {
        Task::Classification => println!("accuracy {metric:.4}"),
        Task::Regression => println!("rmse {metric:.6}"),
    }
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(base) = args.config.parent() {
        cfg.resolve_paths(base);
    }
    let report = experiment::run(&cfg, &args.out_dir)?;
    print!("{}", report.to_text(""));
    Ok(())
}

fn theorem_check(args: TheoremArgs) -> Result<bool> {
    let rows = theory::theorem_check(args.instances, args.seed)?;
    println!(
        "{:>8} {:>12} {:>12} {:>14} {:>14} {:>14} {:>9} {:>9} {:>8}",
        "instance", "lo", "hi", "lhs", "q", "jensen_rhs", "paper_rhs", "jensen_ok", "paper_ok"
    );
    for r in &rows {
        let c = &r.check;
        println!(
            "{:>8} {:>12.6} {:>12.6} {:>14.8} {:>14.10} {:>14.8} {:>9.4} {:>9} {:>8}",
            r.instance, r.lo, r.hi, c.lhs, c.q, c.jensen_rhs, c.paper_rhs, c.jensen_ok, c.paper_ok
        );
    }
    if let Some(out) = &args.out {
        let mut w = csv_writer(out)?;
        w.write_record([
            "instance",
            "lo",
            "hi",
            "lhs",
            "q",
            "jensen_rhs",
            "paper_rhs",
            "jensen_ok",
            "paper_ok",
        ])?;
        for r in &rows {
            let c = &r.check;
            w.write_record([
                r.instance.to_string(),
                r.lo.to_string(),
                r.hi.to_string(),
                c.lhs.to_string(),
                c.q.to_string(),
                c.jensen_rhs.to_string(),
                c.paper_rhs.to_string(),
                c.jensen_ok.to_string(),
                c.paper_ok.to_string(),
            ])?;
        }
        w.flush()?;
    }
    let failed = rows.iter().filter(|r| !r.check.jensen_ok).count();
    let paper_failed = rows.iter().filter(|r| !r.check.paper_ok).count();
    println!(
        "jensen bound: {}/{} hold; printed bound: {}/{} hold",
        rows.len() - failed,
        rows.len(),
        rows.len() - paper_failed,
        rows.len()
    );
    Ok(failed == 0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Split(a) => split(a).map(|_| true),
        Command::SynthSignals(a) => synth_signals(a).map(|_| true),
        Command::Train(a) => train(a).map(|_| true),
        Command::Predict(a) => predict(a).map(|_| true),
        Command::Evaluate(a) => evaluate(a).map(|_| true),
        Command::Run(a) => run(a).map(|_| true),
        Command::TheoremCheck(a) => theorem_check(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
