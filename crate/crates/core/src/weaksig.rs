//! Weak signals: soft labelers for classification, threshold rules for
//! regression, their synthesis from a labeled simulation split, file I/O,
//! label normalization and the signal-averaging baseline.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::data::{DataError, Part, SplitAssignment, TabularDataset};

/// Bound assumed for every signal when no sidecar file is given.
pub const DEFAULT_ERROR_BOUND: f64 = 0.01;

#[derive(Debug, thiserror::Error)]
pub enum SignalError {
    #[error("feature {index} (`{name}`) has zero variance on the simulation split")]
    DegenerateFeature { index: usize, name: String },
    #[error("feature index {index} out of range ({n_features} features)")]
    FeatureOutOfRange { index: usize, n_features: usize },
    #[error("simulation split is empty")]
    EmptySimulation,
    #[error("classification labels must be 0 or 1, found {0}")]
    NonBinaryLabel(f64),
    #[error("signal value {value} at row {row}, signal {signal} is outside [0, 1]")]
    OutOfRange { row: usize, signal: usize, value: f64 },
    #[error("expected {expected} rows, found {found}")]
    RowCount { expected: usize, found: usize },
    #[error("label range is empty: lower {lower} >= upper {upper}")]
    EmptyRange { lower: f64, upper: f64 },
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Nullable positive-class probabilities from `M` labelers over `N` samples,
/// plus per-signal, per-class error-rate bounds.
///
/// Class `j = 1` is positive: `q^[1] = p`, `q^[0] = 1 - p`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationSignals {
    probs: Array2<Option<f64>>,
    bounds: Vec<[f64; 2]>,
}

impl ClassificationSignals {
    pub fn new(probs: Array2<Option<f64>>, bounds: Vec<[f64; 2]>) -> Result<Self, SignalError> {
        if bounds.len() != probs.ncols() {
            return Err(SignalError::RowCount {
                expected: probs.ncols(),
                found: bounds.len(),
            });
        }
        for ((row, signal), v) in probs.indexed_iter() {
            if let Some(v) = *v {
                if !(0.0..=1.0).contains(&v) {
                    return Err(SignalError::OutOfRange { row, signal, value: v });
                }
            }
        }
        for (signal, b) in bounds.iter().enumerate() {
            for &v in b {
                if !(0.0..=1.0).contains(&v) {
                    return Err(SignalError::Format(format!(
                        "bound {v} of signal {signal} is outside [0, 1]"
                    )));
                }
            }
        }
        Ok(Self { probs, bounds })
    }

    /// All bounds set to [`DEFAULT_ERROR_BOUND`].
    pub fn with_default_bounds(probs: Array2<Option<f64>>) -> Result<Self, SignalError> {
        let m = probs.ncols();
        Self::new(probs, vec![[DEFAULT_ERROR_BOUND; 2]; m])
    }

    pub fn n_samples(&self) -> usize {
        self.probs.nrows()
    }

    pub fn n_signals(&self) -> usize {
        self.probs.ncols()
    }

    /// Positive-class probability, or `None` where labeler `m` abstains.
    pub fn prob(&self, i: usize, m: usize) -> Option<f64> {
        self.probs[[i, m]]
    }

    /// `q_{i,m}^[j]`.
    pub fn q(&self, i: usize, m: usize, j: usize) -> Option<f64> {
        self.prob(i, m).map(|p| if j == 1 { p } else { 1.0 - p })
    }

    pub fn probs(&self) -> &Array2<Option<f64>> {
        &self.probs
    }

    pub fn bounds(&self) -> &[[f64; 2]] {
        &self.bounds
    }

    pub fn bound(&self, m: usize, j: usize) -> f64 {
        self.bounds[m][j]
    }

    /// Number of samples labeler `m` covers (`N_m`).
    pub fn coverage(&self, m: usize) -> usize {
        self.probs.column(m).iter().filter(|v| v.is_some()).count()
    }

    /// Columns reordered as `order` (bounds follow their columns).
    pub fn permute_signals(&self, order: &[usize]) -> Self {
        Self {
            probs: self.probs.select(Axis(1), order),
            bounds: order.iter().map(|&m| self.bounds[m]).collect(),
        }
    }

    /// Rows reordered as `order`.
    pub fn permute_samples(&self, order: &[usize]) -> Self {
        Self {
            probs: self.probs.select(Axis(0), order),
            bounds: self.bounds.clone(),
        }
    }

    /// Writes `signal_1..signal_M` columns (empty cell = abstain) and,
    /// optionally, the `M x 2` bounds sidecar.
    pub fn save(&self, path: impl AsRef<Path>, bounds_path: Option<&Path>) -> Result<(), SignalError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record((1..=self.n_signals()).map(|m| format!("signal_{m}")))?;
        for row in self.probs.rows() {
            w.write_record(row.iter().map(|v| v.map(|p| p.to_string()).unwrap_or_default()))?;
        }
        w.flush()?;
        if let Some(bp) = bounds_path {
            let mut f = File::create(bp)?;
            for b in &self.bounds {
                writeln!(f, "{},{}", b[0], b[1])?;
            }
        }
        Ok(())
    }

    /// Reads a signals CSV. Without a sidecar every bound is
    /// [`DEFAULT_ERROR_BOUND`]. `expected_rows`, when given, must match.
    pub fn load(
        path: impl AsRef<Path>,
        bounds_path: Option<&Path>,
        expected_rows: Option<usize>,
    ) -> Result<Self, SignalError> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path.as_ref())?;
        let m = reader.headers()?.len();
        let mut values = Vec::new();
        let mut rows = 0;
        for (row, rec) in reader.records().enumerate() {
            let rec = rec?;
            if rec.len() != m {
                return Err(SignalError::Format(format!(
                    "row {} has {} cells, expected {m}",
                    row + 1,
                    rec.len()
                )));
            }
            for (signal, cell) in rec.iter().enumerate() {
                let cell = cell.trim();
                if cell.is_empty() {
                    values.push(None);
                    continue;
                }
                let v: f64 = cell
                    .parse()
                    .map_err(|_| SignalError::Format(format!("row {}: `{cell}` is not a number", row + 1)))?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(SignalError::OutOfRange { row, signal, value: v });
                }
                values.push(Some(v));
            }
            rows += 1;
        }
        if let Some(expected) = expected_rows {
            if expected != rows {
                return Err(SignalError::RowCount { expected, found: rows });
            }
        }
        let probs = Array2::from_shape_vec((rows, m), values).map_err(|e| SignalError::Format(e.to_string()))?;
        let bounds = match bounds_path {
            Some(bp) => load_bounds(bp)?,
            None => vec![[DEFAULT_ERROR_BOUND; 2]; m],
        };
        Self::new(probs, bounds)
    }
}

fn load_bounds(path: &Path) -> Result<Vec<[f64; 2]>, SignalError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: Option<Vec<f64>> = cells.iter().map(|c| c.parse().ok()).collect();
        match parsed {
            Some(v) if v.len() == 2 => out.push([v[0], v[1]]),
            // Tolerate a header line.
            None if i == 0 => continue,
            _ => {
                return Err(SignalError::Format(format!(
                    "bounds line {}: expected two numbers",
                    i + 1
                )))
            }
        }
    }
    Ok(out)
}

/// How labeler error bounds are estimated from the simulation split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundConvention {
    /// `b^[j] = mean_i [(1 - y^[j]) q^[j] + y^[j] (1 - q^[j])]` with one-hot
    /// gold `y`: the weak-signal constraint evaluated at the gold labels,
    /// divided by the coverage.
    #[default]
    ExpectedError,
    /// `b^[j]` = fraction of gold class-`j` samples the thresholded labeler
    /// gets wrong (0 when class `j` is absent).
    ClassConditional,
}

/// One-feature logistic regression used as a synthetic labeler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Labeler {
    pub feature: usize,
    pub mean: f64,
    pub std: f64,
    pub weight: f64,
    pub bias: f64,
}

pub const LABELER_ITERATIONS: usize = 2000;
pub const LABELER_STEP: f64 = 0.1;

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

impl Labeler {
    /// Full-batch gradient descent on the mean log-loss over z-scored inputs.
    pub fn fit(x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>, feature: usize) -> Option<Self> {
        let n = x.len() as f64;
        let mean = x.sum() / n;
        let std = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        if !(std > 0.0) {
            return None;
        }
        let xs: Vec<f64> = x.iter().map(|v| (v - mean) / std).collect();
        let (mut w, mut b) = (0.0, 0.0);
        for _ in 0..LABELER_ITERATIONS {
            let (mut gw, mut gb) = (0.0, 0.0);
            for (xi, yi) in xs.iter().zip(y.iter()) {
                let r = sigmoid(w * xi + b) - yi;
                gw += r * xi;
                gb += r;
            }
            w -= LABELER_STEP * gw / n;
            b -= LABELER_STEP * gb / n;
        }
        Some(Self {
            feature,
            mean,
            std,
            weight: w,
            bias: b,
        })
    }

    pub fn predict(&self, value: f64) -> f64 {
        sigmoid(self.weight * (value - self.mean) / self.std + self.bias)
    }
}

/// Fitted labelers with their bounds; applies to any feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationLabelers {
    pub labelers: Vec<Labeler>,
    pub bounds: Vec<[f64; 2]>,
}

impl ClassificationLabelers {
    pub fn apply(&self, x: &Array2<f64>) -> ClassificationSignals {
        let probs = Array2::from_shape_fn((x.nrows(), self.labelers.len()), |(i, m)| {
            let l = &self.labelers[m];
            Some(l.predict(x[[i, l.feature]]))
        });
        ClassificationSignals::new(probs, self.bounds.clone()).expect("sigmoid outputs lie in [0, 1]")
    }
}

fn check_features(data: &TabularDataset, features: &[usize]) -> Result<(), SignalError> {
    for &f in features {
        if f >= data.n_features() {
            return Err(SignalError::FeatureOutOfRange {
                index: f,
                n_features: data.n_features(),
            });
        }
    }
    Ok(())
}

/// Error-rate bounds of soft predictions `p` against 0/1 gold labels.
pub fn estimate_bounds(p: &[f64], gold: &[f64], convention: BoundConvention) -> [f64; 2] {
    match convention {
        BoundConvention::ExpectedError => {
            let n = p.len().max(1) as f64;
            let mut out = [0.0; 2];
            for (j, o) in out.iter_mut().enumerate() {
                *o = p
                    .iter()
                    .zip(gold)
                    .map(|(&p, &g)| {
                        let (q, y) = if j == 1 { (p, g) } else { (1.0 - p, 1.0 - g) };
                        (1.0 - y) * q + y * (1.0 - q)
                    })
                    .sum::<f64>()
                    / n;
            }
            out
        }
        BoundConvention::ClassConditional => {
            let mut wrong = [0usize; 2];
            let mut total = [0usize; 2];
            for (&p, &g) in p.iter().zip(gold) {
                let class = g as usize;
                let predicted = usize::from(p >= 0.5);
                total[class] += 1;
                if predicted != class {
                    wrong[class] += 1;
                }
            }
            let rate = |j: usize| {
                if total[j] == 0 {
                    0.0
                } else {
                    wrong[j] as f64 / total[j] as f64
                }
            };
            [rate(0), rate(1)]
        }
    }
}

/// Fits one labeler per feature on the simulation split and estimates its
/// bounds there.
pub fn synth_classification_signals(
    data: &TabularDataset,
    split: &SplitAssignment,
    features: &[usize],
    convention: BoundConvention,
) -> Result<ClassificationLabelers, SignalError> {
    check_features(data, features)?;
    split.check_len(data.len())?;
    let sim = data.part(split, Part::Sim);
    if sim.is_empty() {
        return Err(SignalError::EmptySimulation);
    }
    let gold = sim.labels()?;
    if let Some(&bad) = gold.iter().find(|&&g| g != 0.0 && g != 1.0) {
        return Err(SignalError::NonBinaryLabel(bad));
    }
    let gold_vec = gold.to_vec();
    let mut labelers = Vec::with_capacity(features.len());
    let mut bounds = Vec::with_capacity(features.len());
    for &f in features {
        let col = sim.features.column(f);
        let labeler = Labeler::fit(col, gold.view(), f).ok_or_else(|| SignalError::DegenerateFeature {
            index: f,
            name: data.feature_names[f].clone(),
        })?;
        let p: Vec<f64> = col.iter().map(|&v| labeler.predict(v)).collect();
        bounds.push(estimate_bounds(&p, &gold_vec, convention));
        labelers.push(labeler);
    }
    Ok(ClassificationLabelers { labelers, bounds })
}

/// Threshold rule: samples with `x[feature] >= threshold` are estimated to
/// have mean label `above`, the rest `below` (normalized label space).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionRule {
    pub feature: usize,
    pub threshold: f64,
    pub above: f64,
    pub below: f64,
}

impl RegressionRule {
    pub fn is_above(&self, row: ArrayView1<'_, f64>) -> bool {
        row[self.feature] >= self.threshold
    }

    /// Membership mask of the `x[feature] >= threshold` group.
    pub fn above_mask(&self, x: &Array2<f64>) -> Vec<bool> {
        x.rows().into_iter().map(|r| self.is_above(r)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionRuleSignals {
    pub rules: Vec<RegressionRule>,
}

impl RegressionRuleSignals {
    /// Drops rules that leave either group empty on `x`, logging each drop.
    pub fn retain_nonempty(&self, x: &Array2<f64>) -> Self {
        let rules = self
            .rules
            .iter()
            .filter(|r| {
                let above = r.above_mask(x).iter().filter(|&&b| b).count();
                let keep = above > 0 && above < x.nrows();
                if !keep {
                    log::warn!(
                        "dropping rule on feature {} (threshold {}): one group is empty on the training split",
                        r.feature,
                        r.threshold
                    );
                }
                keep
            })
            .cloned()
            .collect();
        Self { rules }
    }
}

/// Thresholds at the simulation-split feature means; group estimates are the
/// mean normalized simulation labels on either side. Rules with an empty
/// group on the simulation split are dropped with a warning.
pub fn synth_regression_signals(
    data: &TabularDataset,
    split: &SplitAssignment,
    features: &[usize],
    scaler: &LabelScaler,
) -> Result<RegressionRuleSignals, SignalError> {
    check_features(data, features)?;
    split.check_len(data.len())?;
    let sim = data.part(split, Part::Sim);
    if sim.is_empty() {
        return Err(SignalError::EmptySimulation);
    }
    let y = scaler.normalize(sim.labels()?);
    let mut rules = Vec::new();
    for &f in features {
        let col = sim.features.column(f);
        let threshold = col.sum() / col.len() as f64;
        let (mut s_hi, mut n_hi, mut s_lo, mut n_lo) = (0.0, 0usize, 0.0, 0usize);
        for (&v, &t) in col.iter().zip(y.iter()) {
            if v >= threshold {
                s_hi += t;
                n_hi += 1;
            } else {
                s_lo += t;
                n_lo += 1;
            }
        }
        if n_hi == 0 || n_lo == 0 {
            log::warn!("dropping rule on feature {f}: constant on the simulation split");
            continue;
        }
        rules.push(RegressionRule {
            feature: f,
            threshold,
            above: s_hi / n_hi as f64,
            below: s_lo / n_lo as f64,
        });
    }
    Ok(RegressionRuleSignals { rules })
}

/// Affine map of labels from `[lower, upper]` onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelScaler {
    pub lower: f64,
    pub upper: f64,
}

impl LabelScaler {
    pub fn new(lower: f64, upper: f64) -> Result<Self, SignalError> {
        if !(upper > lower) {
            return Err(SignalError::EmptyRange { lower, upper });
        }
        Ok(Self { lower, upper })
    }

    /// Range spanned by `labels`.
    pub fn fit(labels: &Array1<f64>) -> Result<Self, SignalError> {
        let lo = labels.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = labels.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self::new(lo, hi)
    }

    pub fn normalize(&self, y: &Array1<f64>) -> Array1<f64> {
        y.mapv(|v| (v - self.lower) / (self.upper - self.lower))
    }

    pub fn denormalize(&self, y: &Array1<f64>) -> Array1<f64> {
        y.mapv(|v| v * (self.upper - self.lower) + self.lower)
    }
}

/// Per-sample mean of the non-null positive-class probabilities; 0.5 where
/// every labeler abstains.
pub fn avg_classification_scores(signals: &ClassificationSignals) -> Array1<f64> {
    signals
        .probs()
        .rows()
        .into_iter()
        .map(|row| {
            let (sum, n) = row.iter().flatten().fold((0.0, 0usize), |(s, n), p| (s + p, n + 1));
            if n == 0 {
                0.5
            } else {
                sum / n as f64
            }
        })
        .collect()
}

/// AVG class decisions; a score of exactly 0.5 goes to the positive class.
pub fn avg_classification(signals: &ClassificationSignals) -> Array1<f64> {
    avg_classification_scores(signals).mapv(|s| if s >= 0.5 { 1.0 } else { 0.0 })
}

/// Per-sample mean over rules of the estimate for the sample's group
/// (normalized label space).
pub fn avg_regression(rules: &RegressionRuleSignals, x: &Array2<f64>) -> Array1<f64> {
    let m = rules.rules.len().max(1) as f64;
    x.rows()
        .into_iter()
        .map(|row| {
            rules
                .rules
                .iter()
                .map(|r| if r.is_above(row) { r.above } else { r.below })
                .sum::<f64>()
                / m
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn dataset_with_split(x: Array2<f64>, y: Array1<f64>, parts: Vec<Part>) -> (TabularDataset, SplitAssignment) {
        let names = (0..x.ncols()).map(|j| format!("f{j}")).collect();
        (TabularDataset::new(names, x, Some(y)), SplitAssignment { parts })
    }

    #[test]
    fn separable_feature_gives_accurate_labeler() {
        let n = 40;
        let x = Array2::from_shape_fn((n, 1), |(i, _)| i as f64);
        let y = Array1::from_shape_fn(n, |i| if i >= 20 { 1.0 } else { 0.0 });
        let (d, s) = dataset_with_split(x, y.clone(), vec![Part::Sim; n]);
        let l = synth_classification_signals(&d, &s, &[0], BoundConvention::ExpectedError).unwrap();
        let sig = l.apply(&d.features);
        let correct = (0..n)
            .filter(|&i| (sig.prob(i, 0).unwrap() >= 0.5) == (y[i] == 1.0))
            .count();
        assert_eq!(correct, n);
        assert!(l.bounds[0][0] < 0.1 && l.bounds[0][1] < 0.1);
        let hard = synth_classification_signals(&d, &s, &[0], BoundConvention::ClassConditional).unwrap();
        assert_eq!(hard.bounds[0], [0.0, 0.0]);
    }

    #[test]
    fn zero_variance_feature_is_named() {
        let x = array![[1.0, 0.0], [1.0, 1.0], [1.0, 2.0]];
        let (d, s) = dataset_with_split(x, array![0.0, 1.0, 1.0], vec![Part::Sim; 3]);
        match synth_classification_signals(&d, &s, &[0], BoundConvention::ExpectedError) {
            Err(SignalError::DegenerateFeature { index: 0, name }) => assert_eq!(name, "f0"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn constant_label_split_yields_small_bounds() {
        let x = array![[0.0], [1.0], [2.0], [3.0]];
        let (d, s) = dataset_with_split(x, array![1.0, 1.0, 1.0, 1.0], vec![Part::Sim; 4]);
        let l = synth_classification_signals(&d, &s, &[0], BoundConvention::ClassConditional).unwrap();
        assert_eq!(l.bounds[0], [0.0, 0.0]);
        let l = synth_classification_signals(&d, &s, &[0], BoundConvention::ExpectedError).unwrap();
        assert!(l.bounds[0][1] < 0.05);
    }

    #[test]
    fn default_bounds_for_loaded_signals() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        std::fs::write(&p, "signal_1\n0.9\n0.9\n0.9\n").unwrap();
        let s = ClassificationSignals::load(&p, None, Some(3)).unwrap();
        assert_eq!(s.n_signals(), 1);
        assert_eq!(s.coverage(0), 3);
        assert_eq!(s.bound(0, 0), 0.01);
        assert_eq!(s.bound(0, 1), 0.01);
    }

    #[test]
    fn empty_cells_are_null() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        std::fs::write(&p, "signal_1,signal_2\n1,\n,0\n0.5,0.25\n").unwrap();
        let s = ClassificationSignals::load(&p, None, None).unwrap();
        assert_eq!(s.coverage(0), 2);
        assert_eq!(s.coverage(1), 2);
        assert_eq!(s.prob(0, 1), None);
        assert_eq!(s.q(2, 1, 0), Some(0.75));
    }

    #[test]
    fn load_rejects_bad_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        std::fs::write(&p, "signal_1\n1.5\n").unwrap();
        assert!(matches!(
            ClassificationSignals::load(&p, None, None),
            Err(SignalError::OutOfRange { .. })
        ));
        std::fs::write(&p, "signal_1\n0.5\n").unwrap();
        assert!(matches!(
            ClassificationSignals::load(&p, None, Some(2)),
            Err(SignalError::RowCount { .. })
        ));
    }

    #[test]
    fn save_load_round_trip() {
        let probs = array![[Some(0.125), None], [Some(1.0 / 3.0), Some(0.0)]];
        let s = ClassificationSignals::new(probs, vec![[0.1, 0.2], [0.05, 0.3]]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (p, b) = (dir.path().join("s.csv"), dir.path().join("b.csv"));
        s.save(&p, Some(&b)).unwrap();
        assert_eq!(ClassificationSignals::load(&p, Some(&b), Some(2)).unwrap(), s);
    }

    #[test]
    fn avg_single_signal_and_ties() {
        let one = ClassificationSignals::with_default_bounds(array![[Some(0.3)], [Some(0.8)]]).unwrap();
        assert_eq!(avg_classification_scores(&one), array![0.3, 0.8]);
        let tie = ClassificationSignals::with_default_bounds(array![[Some(0.9), Some(0.1)]]).unwrap();
        assert_eq!(avg_classification(&tie), array![1.0]);
        let none = ClassificationSignals::with_default_bounds(array![[None, None]]).unwrap();
        assert_eq!(avg_classification_scores(&none), array![0.5]);
    }

    #[test]
    fn regression_rules_indicator_labels() {
        // y = 1[x >= mean(x)] on the simulation split.
        let x = array![[0.0], [1.0], [2.0], [3.0]];
        let y = array![0.0, 0.0, 1.0, 1.0];
        let (d, s) = dataset_with_split(x, y, vec![Part::Sim; 4]);
        let scaler = LabelScaler::new(0.0, 1.0).unwrap();
        let r = synth_regression_signals(&d, &s, &[0], &scaler).unwrap();
        assert_eq!(r.rules[0].threshold, 1.5);
        assert_eq!((r.rules[0].above, r.rules[0].below), (1.0, 0.0));
    }

    #[test]
    fn regression_rules_independent_label() {
        let x = array![[0.0], [1.0], [0.0], [1.0]];
        let y = array![0.2, 0.2, 0.8, 0.8];
        let (d, s) = dataset_with_split(x, y, vec![Part::Sim; 4]);
        let r = synth_regression_signals(&d, &s, &[0], &LabelScaler::new(0.0, 1.0).unwrap()).unwrap();
        assert!((r.rules[0].above - 0.5).abs() < 1e-15);
        assert!((r.rules[0].below - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rules_with_empty_training_group_are_dropped() {
        let rules = RegressionRuleSignals {
            rules: vec![
                RegressionRule {
                    feature: 0,
                    threshold: 10.0,
                    above: 1.0,
                    below: 0.0,
                },
                RegressionRule {
                    feature: 0,
                    threshold: 0.5,
                    above: 1.0,
                    below: 0.0,
                },
            ],
        };
        let kept = rules.retain_nonempty(&array![[0.0], [1.0]]);
        assert_eq!(kept.rules.len(), 1);
        assert_eq!(kept.rules[0].threshold, 0.5);
    }

    #[test]
    fn avg_regression_uses_group_estimates() {
        let rules = RegressionRuleSignals {
            rules: vec![
                RegressionRule {
                    feature: 0,
                    threshold: 0.0,
                    above: 0.8,
                    below: 0.2,
                },
                RegressionRule {
                    feature: 1,
                    threshold: 0.0,
                    above: 0.6,
                    below: 0.4,
                },
            ],
        };
        let avg = avg_regression(&rules, &array![[1.0, -1.0], [-1.0, -1.0]]);
        assert!((avg[0] - 0.6).abs() < 1e-15);
        assert!((avg[1] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn label_scaler_maps_range() {
        let s = LabelScaler::new(17.4, 38.9).unwrap();
        let n = s.normalize(&array![38.9, (17.4 + 38.9) / 2.0, 17.4]);
        assert!((n[0] - 1.0).abs() < 1e-15);
        assert!((n[1] - 0.5).abs() < 1e-15);
        assert_eq!(n[2], 0.0);
        assert!(LabelScaler::new(1.0, 1.0).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn scaler_round_trip(lo in -1e3f64..1e3, width in 1e-3f64..1e3, v in -1e4f64..1e4) {
                let s = LabelScaler::new(lo, lo + width).unwrap();
                let back = s.denormalize(&s.normalize(&array![v]))[0];
                prop_assert!((back - v).abs() <= 1e-12 * v.abs().max(1.0) * (1.0 + lo.abs() / width));
            }

            #[test]
            fn avg_invariant_to_column_order(
                probs in proptest::collection::vec(proptest::option::of(0.0f64..=1.0), 12)
            ) {
                let a = Array2::from_shape_vec((4, 3), probs).unwrap();
                let s = ClassificationSignals::with_default_bounds(a).unwrap();
                let p = s.permute_signals(&[2, 0, 1]);
                let (x, y) = (avg_classification_scores(&s), avg_classification_scores(&p));
                for (u, v) in x.iter().zip(y.iter()) {
                    prop_assert!((u - v).abs() < 1e-15);
                }
            }
        }
    }
}
