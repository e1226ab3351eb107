//! Penalty objectives: box, simplex and weak-signal terms for classification,
//! group-mean equality terms for regression, the likelihood term, and
//! unweighted violation reports.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::diff::{Tape, Var};
use crate::flows::std_normal_log_density;
use crate::weaksig::{ClassificationSignals, RegressionRuleSignals};

#[derive(Debug, thiserror::Error)]
pub enum ObjectiveError {
    #[error("penalty coefficient `{0}` must be finite and nonnegative")]
    BadCoefficient(&'static str),
    #[error("{what}: expected {expected}, found {found}")]
    DimMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("rule {rule} leaves the {group} group empty")]
    EmptyGroup { rule: usize, group: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PenaltyConfig {
    /// Weight of the `y < 0` box term.
    pub lambda1: f64,
    /// Weight of the `y > 1` box term.
    pub lambda2: f64,
    /// Simplex term for classification, group-mean term for regression.
    pub lambda3: f64,
    /// Weak-signal term for classification (unused for regression).
    pub lambda4: f64,
    pub include_nll: bool,
    /// Box terms with the hinge arguments `[y]_+^2` and `[1 - y]_+^2`, which
    /// penalize the inside of `[0, 1]`. Kept only for auditing.
    pub literal_box: bool,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self {
            lambda1: 10.0,
            lambda2: 10.0,
            lambda3: 10.0,
            lambda4: 10.0,
            include_nll: true,
            literal_box: false,
        }
    }
}

impl PenaltyConfig {
    pub fn validate(&self) -> Result<(), ObjectiveError> {
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
            ("lambda4", self.lambda4),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ObjectiveError::BadCoefficient(name));
            }
        }
        Ok(())
    }
}

/// Weak-signal constraints in the form `LHS_j = offset_j + sum_i y_i^[j] A_j[i, :]`,
/// with `A_j = mask * (1 - 2 q^[j])` and `offset_j = sum_i mask * q^[j]`.
#[derive(Debug, Clone)]
pub struct ClassificationConstraint {
    coef: [Array2<f64>; 2],
    offset: [Array2<f64>; 2],
    /// `N_m b_m^[j]` as `1 x M`.
    rhs: [Array2<f64>; 2],
}

impl ClassificationConstraint {
    pub fn new(signals: &ClassificationSignals) -> Self {
        let (n, m) = (signals.n_samples(), signals.n_signals());
        let build = |j: usize| {
            let mut coef = Array2::zeros((n, m));
            let mut offset = Array2::zeros((1, m));
            for ((i, s), p) in signals.probs().indexed_iter() {
                if let Some(p) = *p {
                    let q = if j == 1 { p } else { 1.0 - p };
                    coef[[i, s]] = 1.0 - 2.0 * q;
                    offset[[0, s]] += q;
                }
            }
            let rhs = Array2::from_shape_fn((1, m), |(_, s)| signals.coverage(s) as f64 * signals.bound(s, j));
            (coef, offset, rhs)
        };
        let (a0, o0, r0) = build(0);
        let (a1, o1, r1) = build(1);
        Self {
            coef: [a0, a1],
            offset: [o0, o1],
            rhs: [r0, r1],
        }
    }

    pub fn n_samples(&self) -> usize {
        self.coef[0].nrows()
    }

    pub fn n_signals(&self) -> usize {
        self.coef[0].ncols()
    }

    fn check(&self, y: ArrayView2<'_, f64>) -> Result<(), ObjectiveError> {
        if y.nrows() != self.n_samples() {
            return Err(ObjectiveError::DimMismatch {
                what: "label rows",
                expected: self.n_samples(),
                found: y.nrows(),
            });
        }
        if y.ncols() != 2 {
            return Err(ObjectiveError::DimMismatch {
                what: "label columns",
                expected: 2,
                found: y.ncols(),
            });
        }
        Ok(())
    }

    /// Constraint left-hand sides as `M x 2` (signal, class).
    pub fn lhs(&self, y: ArrayView2<'_, f64>) -> Result<Array2<f64>, ObjectiveError> {
        self.check(y)?;
        let mut out = Array2::zeros((self.n_signals(), 2));
        for j in 0..2 {
            let v = y.column(j).dot(&self.coef[j]) + self.offset[j].row(0);
            out.column_mut(j).assign(&v);
        }
        Ok(out)
    }

    /// `LHS - N_m b_m^[j]` as `M x 2`.
    pub fn slack(&self, y: ArrayView2<'_, f64>) -> Result<Array2<f64>, ObjectiveError> {
        let mut s = self.lhs(y)?;
        for j in 0..2 {
            let mut col = s.column_mut(j);
            col -= &self.rhs[j].row(0);
        }
        Ok(s)
    }

    /// `1 x M` slack node for class `j`; `y_j` is the `N x 1` label column.
    pub fn slack_on(&self, tape: &Tape, y_j: Var, j: usize) -> Var {
        let a = tape.constant(self.coef[j].clone());
        let lhs = tape.add(tape.sum_rows(tape.mul(y_j, a)), tape.constant(self.offset[j].clone()));
        tape.sub(lhs, tape.constant(self.rhs[j].clone()))
    }
}

fn box_on(tape: &Tape, y: Var, cfg: &PenaltyConfig) -> Var {
    let (low, high) = if cfg.literal_box {
        (tape.pos_part(y), tape.pos_part(tape.offset(tape.neg(y), 1.0)))
    } else {
        (tape.pos_part(tape.neg(y)), tape.pos_part(tape.offset(y, -1.0)))
    };
    tape.add(
        tape.scale(tape.sum(tape.square(low)), cfg.lambda1),
        tape.scale(tape.sum(tape.square(high)), cfg.lambda2),
    )
}

/// Classification penalty recorded on `tape`; `y` holds the two `N x 1`
/// label columns (class 0, class 1).
pub fn classification_penalty_on(tape: &Tape, y: &[Var], cons: &ClassificationConstraint, cfg: &PenaltyConfig) -> Var {
    assert_eq!(y.len(), 2, "binary classification has two label columns");
    let mut total = tape.add(box_on(tape, y[0], cfg), box_on(tape, y[1], cfg));
    let simplex = tape.sum(tape.square(tape.offset(tape.add(y[0], y[1]), -1.0)));
    total = tape.add(total, tape.scale(simplex, cfg.lambda3));
    for (j, &yj) in y.iter().enumerate() {
        let hinge = tape.sum(tape.square(tape.pos_part(cons.slack_on(tape, yj, j))));
        total = tape.add(total, tape.scale(hinge, cfg.lambda4));
    }
    total
}

fn label_columns(tape: &Tape, y: ArrayView2<'_, f64>) -> Vec<Var> {
    (0..y.ncols())
        .map(|j| tape.constant(y.column(j).to_owned().insert_axis(Axis(1))))
        .collect()
}

/// Classification penalty of an `N x 2` label matrix.
pub fn classification_penalty(
    y: ArrayView2<'_, f64>,
    signals: &ClassificationSignals,
    cfg: &PenaltyConfig,
) -> Result<f64, ObjectiveError> {
    let cons = ClassificationConstraint::new(signals);
    cons.check(y)?;
    let tape = Tape::new();
    let cols = label_columns(&tape, y);
    let v = classification_penalty_on(&tape, &cols, &cons, cfg);
    Ok(tape.scalar(v))
}

/// Group-averaging weights for threshold rules over a fixed sample set.
#[derive(Debug, Clone)]
pub struct RegressionConstraint {
    /// `N x R`: membership divided by group size, for the above and below groups.
    weights: [Array2<f64>; 2],
    /// `1 x R` group estimates.
    targets: [Array2<f64>; 2],
}

impl RegressionConstraint {
    pub fn new(rules: &RegressionRuleSignals, x: ArrayView2<'_, f64>) -> Result<Self, ObjectiveError> {
        let (n, r) = (x.nrows(), rules.rules.len());
        let mut weights = [Array2::zeros((n, r)), Array2::zeros((n, r))];
        let mut targets = [Array2::zeros((1, r)), Array2::zeros((1, r))];
        for (k, rule) in rules.rules.iter().enumerate() {
            if rule.feature >= x.ncols() {
                return Err(ObjectiveError::DimMismatch {
                    what: "rule feature index",
                    expected: x.ncols(),
                    found: rule.feature,
                });
            }
            let above: Vec<bool> = x.rows().into_iter().map(|row| rule.is_above(row)).collect();
            for (g, group) in ["above", "below"].into_iter().enumerate() {
                let members = above.iter().filter(|&&a| a == (g == 0)).count();
                if members == 0 {
                    return Err(ObjectiveError::EmptyGroup { rule: k, group });
                }
                for (i, &a) in above.iter().enumerate() {
                    if a == (g == 0) {
                        weights[g][[i, k]] = 1.0 / members as f64;
                    }
                }
            }
            targets[0][[0, k]] = rule.above;
            targets[1][[0, k]] = rule.below;
        }
        Ok(Self { weights, targets })
    }

    pub fn n_samples(&self) -> usize {
        self.weights[0].nrows()
    }

    pub fn n_rules(&self) -> usize {
        self.weights[0].ncols()
    }

    /// Group-mean deviations `mean_D y - b` as `R x 2` (above, below).
    pub fn slack(&self, y: &Array1<f64>) -> Result<Array2<f64>, ObjectiveError> {
        if y.len() != self.n_samples() {
            return Err(ObjectiveError::DimMismatch {
                what: "label rows",
                expected: self.n_samples(),
                found: y.len(),
            });
        }
        let mut out = Array2::zeros((self.n_rules(), 2));
        for g in 0..2 {
            out.column_mut(g)
                .assign(&(y.dot(&self.weights[g]) - self.targets[g].row(0)));
        }
        Ok(out)
    }

    fn slack_on(&self, tape: &Tape, y: Var, g: usize) -> Var {
        let w = tape.constant(self.weights[g].clone());
        tape.sub(tape.sum_rows(tape.mul(y, w)), tape.constant(self.targets[g].clone()))
    }
}

/// Regression penalty recorded on `tape`; `y` is the `N x 1` label column.
pub fn regression_penalty_on(tape: &Tape, y: Var, cons: &RegressionConstraint, cfg: &PenaltyConfig) -> Var {
    let mut total = box_on(tape, y, cfg);
    if cons.n_rules() > 0 {
        for g in 0..2 {
            let sq = tape.sum(tape.square(cons.slack_on(tape, y, g)));
            total = tape.add(total, tape.scale(sq, cfg.lambda3));
        }
    }
    total
}

/// Regression penalty of `N` labels whose rules are evaluated on `x`.
pub fn regression_penalty(
    y: &Array1<f64>,
    rules: &RegressionRuleSignals,
    x: ArrayView2<'_, f64>,
    cfg: &PenaltyConfig,
) -> Result<f64, ObjectiveError> {
    let cons = RegressionConstraint::new(rules, x)?;
    cons.slack(y)?;
    let tape = Tape::new();
    let yv = tape.constant(y.clone().insert_axis(Axis(1)));
    let v = regression_penalty_on(&tape, yv, &cons, cfg);
    Ok(tape.scalar(v))
}

/// `-sum_i (log N(z_i) - logdet_i)`. The prior term is a constant; only the
/// log-determinant carries gradient.
pub fn nll_term_on(tape: &Tape, z: ArrayView2<'_, f64>, logdet: Var) -> Var {
    let prior = std_normal_log_density(z).sum();
    tape.offset(tape.sum(logdet), -prior)
}

pub fn nll_term(z: ArrayView2<'_, f64>, logdet: &Array1<f64>) -> Result<f64, ObjectiveError> {
    if z.nrows() != logdet.len() {
        return Err(ObjectiveError::DimMismatch {
            what: "log-determinant rows",
            expected: z.nrows(),
            found: logdet.len(),
        });
    }
    Ok(-(std_normal_log_density(z) - logdet).sum())
}

/// Unweighted constraint violations of one set of generated labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    /// Classification: `LHS - N_m b_m^[j]` per (signal, class). Regression:
    /// group-mean deviation per (rule, above/below).
    pub slacks: Array2<f64>,
    /// Classification: sum of positive slacks. Regression: sum of absolute
    /// deviations.
    pub weak_total: f64,
    /// `sum [-y]_+ + [y - 1]_+`.
    pub box_total: f64,
    /// `sum_i |sum_j y_i^[j] - 1|`; zero for regression.
    pub simplex_total: f64,
}

impl ViolationReport {
    pub fn total(&self) -> f64 {
        self.weak_total + self.box_total + self.simplex_total
    }
}

fn box_total<'a>(values: impl Iterator<Item = &'a f64>) -> f64 {
    values.map(|&v| (-v).max(0.0) + (v - 1.0).max(0.0)).sum()
}

pub fn classification_violations(
    y: ArrayView2<'_, f64>,
    cons: &ClassificationConstraint,
) -> Result<ViolationReport, ObjectiveError> {
    let slacks = cons.slack(y)?;
    Ok(ViolationReport {
        weak_total: slacks.iter().map(|s| s.max(0.0)).sum(),
        box_total: box_total(y.iter()),
        simplex_total: y.rows().into_iter().map(|r| (r.sum() - 1.0).abs()).sum(),
        slacks,
    })
}

pub fn violation_report(
    y: ArrayView2<'_, f64>,
    signals: &ClassificationSignals,
) -> Result<ViolationReport, ObjectiveError> {
    classification_violations(y, &ClassificationConstraint::new(signals))
}

pub fn regression_violations(y: &Array1<f64>, cons: &RegressionConstraint) -> Result<ViolationReport, ObjectiveError> {
    let slacks = cons.slack(y)?;
    Ok(ViolationReport {
        weak_total: slacks.iter().map(|s| s.abs()).sum(),
        box_total: box_total(y.iter()),
        simplex_total: 0.0,
        slacks,
    })
}
