//! Full-batch inverse training of label flows, sample-average prediction,
//! the two-stage (LLF-TS) downstream classifier, and metrics.

use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diff::{Adam, AdamConfig, DiffError, ParamStore, Tape, Var};
use crate::flows::{FlowConfig, FlowError, FlowModel, Mlp};
use crate::objectives::{
    classification_penalty_on, classification_violations, nll_term_on, regression_penalty_on, regression_violations,
    ClassificationConstraint, ObjectiveError, PenaltyConfig, RegressionConstraint,
};
use crate::weaksig::{ClassificationSignals, LabelScaler, RegressionRuleSignals};

/// Latent draws, prediction draws and initialization use separate streams of
/// the run seed.
const LATENT_STREAM: u64 = 1;
const PREDICT_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classification,
    Regression,
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("non-finite loss at epoch {epoch}")]
    NonFinite {
        epoch: usize,
        /// Parameters of the last epoch whose loss was finite.
        last_good: Box<FlowModel>,
        partial: Box<RunResult>,
    },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("{what}: expected {expected}, found {found}")]
    DimMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Diff(#[from] DiffError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub lr0: f64,
    pub decay: f64,
    /// Latent draws per sample per epoch (`L_t`).
    pub train_samples: usize,
    /// Generated draws averaged at prediction time (`L_p`).
    pub predict_samples: usize,
    pub seed: u64,
    pub stop_window: usize,
    pub stop_rel_tol: f64,
    pub penalty: PenaltyConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 2000,
            lr0: 1e-3,
            decay: 0.996,
            train_samples: 1,
            predict_samples: 10,
            seed: 0,
            stop_window: 10,
            stop_rel_tol: 1e-6,
            penalty: PenaltyConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if self.max_epochs == 0 {
            return bad("max_epochs must be positive");
        }
        if self.train_samples == 0 || self.predict_samples == 0 {
            return bad("sample counts must be at least 1");
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) || !(self.decay > 0.0 && self.decay <= 1.0) {
            return bad("lr0 must be positive and decay in (0, 1]");
        }
        if self.stop_window == 0 || !(self.stop_rel_tol >= 0.0) {
            return bad("stop_window must be positive and stop_rel_tol nonnegative");
        }
        self.penalty.validate()?;
        Ok(())
    }
}

/// Weak supervision for the training split.
#[derive(Debug, Clone, Copy)]
pub enum Supervision<'a> {
    Classification(&'a ClassificationSignals),
    Regression(&'a RegressionRuleSignals),
}

impl Supervision<'_> {
    pub fn task(&self) -> Task {
        match self {
            Supervision::Classification(_) => Task::Classification,
            Supervision::Regression(_) => Task::Regression,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunResult {
    /// Training loss per executed epoch.
    pub losses: Vec<f64>,
    /// Weak-signal violation total of the generated labels per executed epoch.
    pub violations: Vec<f64>,
    pub epochs: usize,
    pub stopped_early: bool,
    pub wall_s: f64,
    pub metric: Option<f64>,
    pub predictions: Option<Vec<f64>>,
}

/// Precomputed constraint data for one training split.
enum Constraint {
    Classification(ClassificationConstraint),
    Regression(RegressionConstraint),
}

impl Constraint {
    fn new(x: ArrayView2<'_, f64>, sup: Supervision<'_>) -> Result<Self, TrainError> {
        match sup {
            Supervision::Classification(s) => {
                if s.n_samples() != x.nrows() {
                    return Err(TrainError::DimMismatch {
                        what: "signal rows",
                        expected: x.nrows(),
                        found: s.n_samples(),
                    });
                }
                Ok(Self::Classification(ClassificationConstraint::new(s)))
            }
            Supervision::Regression(r) => Ok(Self::Regression(RegressionConstraint::new(r, x)?)),
        }
    }

    fn penalty_on(&self, tape: &Tape, y: &[Var], cfg: &PenaltyConfig) -> Var {
        match self {
            Self::Classification(c) => classification_penalty_on(tape, y, c, cfg),
            Self::Regression(c) => regression_penalty_on(tape, y[0], c, cfg),
        }
    }

    fn violation(&self, y: &Array2<f64>) -> Result<f64, TrainError> {
        Ok(match self {
            Self::Classification(c) => classification_violations(y.view(), c)?.weak_total,
            Self::Regression(c) => regression_violations(&y.column(0).to_owned(), c)?.weak_total,
        })
    }
}

fn column_var(tape: &Tape, a: &Array2<f64>, j: usize) -> Var {
    tape.constant(a.column(j).to_owned().insert_axis(Axis(1)))
}

fn join(tape: &Tape, cols: &[Var]) -> Array2<f64> {
    let n = tape.shape(cols[0]).0;
    let mut out = Array2::zeros((n, cols.len()));
    for (j, &c) in cols.iter().enumerate() {
        out.column_mut(j).assign(&tape.value(c).column(0));
    }
    out
}

/// Records the full training loss for the given latent draws (one `N x K`
/// matrix per draw) and returns it with the labels of the first draw.
fn record_loss(
    tape: &Tape,
    model: &FlowModel,
    x: &Array2<f64>,
    constraint: &Constraint,
    penalty: &PenaltyConfig,
    draws: &[Array2<f64>],
) -> (Var, Array2<f64>) {
    let xv = tape.constant(x.clone());
    let mut total: Option<Var> = None;
    let mut first_y = None;
    for z in draws {
        let cols = (0..z.ncols()).map(|j| column_var(tape, z, j)).collect();
        let trace = model.generate_on(tape, xv, cols);
        let mut loss = constraint.penalty_on(tape, &trace.y, penalty);
        if penalty.include_nll {
            loss = tape.add(loss, nll_term_on(tape, z.view(), trace.logdet));
        }
        if first_y.is_none() {
            first_y = Some(join(tape, &trace.y));
        }
        total = Some(match total {
            Some(t) => tape.add(t, loss),
            None => loss,
        });
    }
    let total = total.expect("at least one draw");
    let total = if draws.len() > 1 {
        tape.scale(total, 1.0 / draws.len() as f64)
    } else {
        total
    };
    (total, first_y.expect("at least one draw"))
}

/// Full training loss and its flat parameter gradient for fixed latent draws.
pub fn loss_and_gradient(
    model: &FlowModel,
    x: &Array2<f64>,
    supervision: Supervision<'_>,
    penalty: &PenaltyConfig,
    draws: &[Array2<f64>],
) -> Result<(f64, Vec<f64>), TrainError> {
    let constraint = Constraint::new(x.view(), supervision)?;
    let tape = Tape::new();
    let (loss, _) = record_loss(&tape, model, x, &constraint, penalty, draws);
    let value = tape.checked_scalar(loss)?;
    Ok((value, tape.backward(loss)?.to_flat(&model.params)))
}

fn check_model(flow_cfg: &FlowConfig, x: ArrayView2<'_, f64>, sup: Supervision<'_>) -> Result<(), TrainError> {
    if x.nrows() == 0 {
        return Err(TrainError::InvalidConfig("training split is empty".into()));
    }
    if flow_cfg.feature_dim != x.ncols() {
        return Err(TrainError::DimMismatch {
            what: "feature columns",
            expected: flow_cfg.feature_dim,
            found: x.ncols(),
        });
    }
    let want = match sup.task() {
        Task::Classification => 2,
        Task::Regression => 1,
    };
    if flow_cfg.label_dim != want {
        return Err(TrainError::DimMismatch {
            what: "flow label dimension",
            expected: want,
            found: flow_cfg.label_dim,
        });
    }
    Ok(())
}

/// Trains a flow on the training features `x` under `supervision`.
pub fn train_llf(
    x: ArrayView2<'_, f64>,
    supervision: Supervision<'_>,
    flow_cfg: &FlowConfig,
    cfg: &TrainConfig,
) -> Result<(FlowModel, RunResult), TrainError> {
    cfg.validate()?;
    check_model(flow_cfg, x, supervision)?;
    let start = Instant::now();
    let constraint = Constraint::new(x, supervision)?;
    let mut model = FlowModel::new(flow_cfg.clone(), cfg.seed)?;
    let mut adam = Adam::new(
        AdamConfig {
            lr0: cfg.lr0,
            decay: cfg.decay,
            ..AdamConfig::default()
        },
        &model.params,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(LATENT_STREAM);
    let x = x.to_owned();
    let mut result = RunResult::default();
    let mut best: Vec<f64> = Vec::with_capacity(cfg.max_epochs);

    for epoch in 0..cfg.max_epochs {
        let draws: Vec<Array2<f64>> = (0..cfg.train_samples)
            .map(|_| model.draw_latent(x.nrows(), &mut rng))
            .collect();
        let tape = Tape::new();
        let (loss, y) = record_loss(&tape, &model, &x, &constraint, &cfg.penalty, &draws);
        let abort = |result: RunResult, model: FlowModel| TrainError::NonFinite {
            epoch,
            last_good: Box::new(model),
            partial: Box::new(result),
        };
        let value = match tape.checked_scalar(loss) {
            Ok(v) => v,
            Err(_) => return Err(abort(result, model)),
        };
        let grads = tape.backward(loss)?;
        drop(tape);
        result.losses.push(value);
        result.violations.push(constraint.violation(&y)?);
        result.epochs = epoch + 1;

        let last_good = model.params.clone();
        if adam.step(&mut model.params, &grads).is_err() {
            model.params = last_good;
            return Err(abort(result, model));
        }
        adam.end_epoch();

        let b = best.last().map_or(value, |&prev: &f64| prev.min(value));
        best.push(b);
        if epoch >= cfg.stop_window {
            let old = best[epoch - cfg.stop_window];
            if old - b < cfg.stop_rel_tol * old.abs() {
                result.stopped_early = epoch + 1 < cfg.max_epochs;
                break;
            }
        }
    }
    result.wall_s = start.elapsed().as_secs_f64();
    log::debug!(
        "trained {} epochs in {:.1}s, final loss {:.4}",
        result.epochs,
        result.wall_s,
        result.losses.last().copied().unwrap_or(f64::NAN)
    );
    Ok((model, result))
}

/// The ablation trained on the penalty terms only.
pub fn train_llf_wo_nll(
    x: ArrayView2<'_, f64>,
    supervision: Supervision<'_>,
    flow_cfg: &FlowConfig,
    cfg: &TrainConfig,
) -> Result<(FlowModel, RunResult), TrainError> {
    let mut cfg = *cfg;
    cfg.penalty.include_nll = false;
    train_llf(x, supervision, flow_cfg, &cfg)
}

/// Mean of `samples` generated labels per row, drawn from the prediction
/// stream of `seed`.
pub fn predict_scores(
    model: &FlowModel,
    x: ArrayView2<'_, f64>,
    samples: usize,
    seed: u64,
) -> Result<Array2<f64>, TrainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(PREDICT_STREAM);
    Ok(model.sample_labels(x, samples, &mut rng)?)
}

/// Class decisions from averaged two-dimensional labels; ties go to the
/// positive class.
pub fn classify(scores: ArrayView2<'_, f64>) -> Array1<f64> {
    scores
        .rows()
        .into_iter()
        .map(|r| if r[1] >= r[0] { 1.0 } else { 0.0 })
        .collect()
}

/// Regression outputs clamped to `[0, 1]` and mapped back to label units.
pub fn regress(scores: ArrayView2<'_, f64>, scaler: &LabelScaler) -> Array1<f64> {
    scaler.denormalize(&scores.column(0).mapv(|v| v.clamp(0.0, 1.0)))
}

/// Final predictions: class labels, or regression values on the original
/// scale (`scaler` is required for regression).
pub fn predict(
    model: &FlowModel,
    x: ArrayView2<'_, f64>,
    samples: usize,
    seed: u64,
    scaler: Option<&LabelScaler>,
) -> Result<Array1<f64>, TrainError> {
    let scores = predict_scores(model, x, samples, seed)?;
    Ok(match model.config.label_dim {
        2 => classify(scores.view()),
        _ => {
            let scaler =
                scaler.ok_or_else(|| TrainError::InvalidConfig("regression prediction needs a label range".into()))?;
            regress(scores.view(), scaler)
        }
    })
}

/// Accuracy in percent, or RMSE.
pub fn evaluate(preds: ArrayView1<'_, f64>, gold: ArrayView1<'_, f64>, task: Task) -> Result<f64, TrainError> {
    if preds.len() != gold.len() {
        return Err(TrainError::DimMismatch {
            what: "prediction count",
            expected: gold.len(),
            found: preds.len(),
        });
    }
    if gold.is_empty() {
        return Err(TrainError::InvalidConfig("nothing to evaluate".into()));
    }
    let n = gold.len() as f64;
    Ok(match task {
        Task::Classification => 100.0 * preds.iter().zip(gold).filter(|(p, g)| p == g).count() as f64 / n,
        Task::Regression => (preds.iter().zip(gold).map(|(p, g)| (p - g).powi(2)).sum::<f64>() / n).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TwoStageConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub init_std: f64,
    pub seed: u64,
}

impl Default for TwoStageConfig {
    fn default() -> Self {
        Self {
            hidden: 512,
            epochs: 200,
            lr: 1e-3,
            init_std: 0.1,
            seed: 0,
        }
    }
}

/// Downstream classifier trained on inferred soft labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoStageClassifier {
    pub net: Mlp,
    pub params: ParamStore,
}

/// Turns averaged flow outputs into class distributions: clamp to `[0, 1]`
/// and renormalize rows (uniform where both entries clamp to zero).
pub fn soft_targets(scores: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut t = scores.mapv(|v| v.clamp(0.0, 1.0));
    for mut row in t.rows_mut() {
        let s = row.sum();
        if s > 0.0 {
            row /= s;
        } else {
            let k = row.len() as f64;
            row.fill(1.0 / k);
        }
    }
    t
}

/// Fits a one-hidden-layer `tanh` network with softmax output by full-batch
/// Adam on the soft-target cross-entropy.
pub fn train_two_stage(
    x: ArrayView2<'_, f64>,
    targets: ArrayView2<'_, f64>,
    cfg: &TwoStageConfig,
) -> Result<TwoStageClassifier, TrainError> {
    if x.nrows() != targets.nrows() {
        return Err(TrainError::DimMismatch {
            what: "target rows",
            expected: x.nrows(),
            found: targets.nrows(),
        });
    }
    let mut params = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let net = Mlp::build(
        &mut params,
        "classifier",
        &[x.ncols(), cfg.hidden, targets.ncols()],
        cfg.init_std,
        &mut rng,
    )?;
    let mut adam = Adam::new(
        AdamConfig {
            lr0: cfg.lr,
            decay: 1.0,
            ..AdamConfig::default()
        },
        &params,
    );
    let (x, targets) = (x.to_owned(), targets.to_owned());
    let n = x.nrows() as f64;
    for _ in 0..cfg.epochs {
        let tape = Tape::new();
        let logits = net.forward(&tape, &params, tape.constant(x.clone()));
        let ce = tape.mul(tape.log_softmax(logits), tape.constant(targets.clone()));
        let loss = tape.scale(tape.sum(ce), -1.0 / n);
        tape.checked_scalar(loss)?;
        let grads = tape.backward(loss)?;
        adam.step(&mut params, &grads)?;
        adam.end_epoch();
    }
    Ok(TwoStageClassifier { net, params })
}

impl TwoStageClassifier {
    /// Class probabilities per row.
    pub fn probabilities(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let tape = Tape::new();
        let out = tape.log_softmax(self.net.forward(&tape, &self.params, tape.constant(x.to_owned())));
        let p = tape.value(out).mapv(f64::exp);
        p
    }

    /// Argmax classes; ties go to the positive class.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Array1<f64> {
        classify(self.probabilities(x).view())
    }
}
