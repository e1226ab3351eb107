//! Tabular datasets, CSV ingestion and train/simulation/test splits.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {msg}")]
    Parse { path: String, msg: String },
    #[error("dataset has {0} samples; at least 3 are needed to split")]
    TooSmall(usize),
    #[error("split ratio components must be positive")]
    BadRatio,
    #[error("split has {found} entries but the dataset has {expected} samples")]
    SplitLength { expected: usize, found: usize },
    #[error("dataset has no gold labels")]
    NoLabels,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Feature matrix with optional gold labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    pub feature_names: Vec<String>,
    pub features: Array2<f64>,
    pub labels: Option<Array1<f64>>,
}

impl TabularDataset {
    pub fn new(feature_names: Vec<String>, features: Array2<f64>, labels: Option<Array1<f64>>) -> Self {
        assert_eq!(feature_names.len(), features.ncols());
        if let Some(l) = &labels {
            assert_eq!(l.len(), features.nrows());
        }
        Self {
            feature_names,
            features,
            labels,
        }
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn labels(&self) -> Result<&Array1<f64>, DataError> {
        self.labels.as_ref().ok_or(DataError::NoLabels)
    }

    /// Reads a CSV with a header row. A final column named `label` becomes the
    /// gold labels; every other column is a feature.
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let path_str = path.as_ref().display().to_string();
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path.as_ref())?;
        let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let has_label = headers.last().is_some_and(|h| h == "label");
        let n_feat = if has_label { headers.len() - 1 } else { headers.len() };
        let mut values = Vec::new();
        let mut labels = Vec::new();
        let mut rows = 0;
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            for (col, field) in record.iter().enumerate() {
                let v: f64 = field.trim().parse().map_err(|_| DataError::Parse {
                    path: path_str.clone(),
                    msg: format!("row {} column `{}`: `{field}` is not a number", line + 1, headers[col]),
                })?;
                if !v.is_finite() {
                    return Err(DataError::Parse {
                        path: path_str.clone(),
                        msg: format!("row {} column `{}` is not finite", line + 1, headers[col]),
                    });
                }
                if col < n_feat {
                    values.push(v);
                } else {
                    labels.push(v);
                }
            }
            rows += 1;
        }
        let features = Array2::from_shape_vec((rows, n_feat), values).map_err(|e| DataError::Parse {
            path: path_str.clone(),
            msg: e.to_string(),
        })?;
        Ok(Self {
            feature_names: headers[..n_feat].to_vec(),
            features,
            labels: has_label.then(|| Array1::from(labels)),
        })
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = self.feature_names.clone();
        if self.labels.is_some() {
            header.push("label".into());
        }
        w.write_record(&header)?;
        for (i, row) in self.features.rows().into_iter().enumerate() {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            if let Some(l) = &self.labels {
                rec.push(l[i].to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Rows at `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            feature_names: self.feature_names.clone(),
            features: self.features.select(Axis(0), idx),
            labels: self.labels.as_ref().map(|l| l.select(Axis(0), idx)),
        }
    }

    /// The rows assigned to `part`.
    pub fn part(&self, split: &SplitAssignment, part: Part) -> Self {
        self.subset(&split.indices(part))
    }
}

/// Per-column z-scoring statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Column means and population standard deviations; zero-variance
    /// columns get a unit scale so they map to zero.
    pub fn fit(x: &Array2<f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mean = x.sum_axis(Axis(0)) / n;
        let std = x
            .axis_iter(Axis(1))
            .zip(mean.iter())
            .map(|(c, m)| {
                let s = (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self {
            mean: mean.to_vec(),
            std,
        }
    }

    pub fn transform(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = x.clone();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let (m, s) = (self.mean[j], self.std[j]);
            col.mapv_inplace(|v| (v - m) / s);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Part {
    Train,
    Sim,
    Test,
}

impl fmt::Display for Part {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Part::Train => "train",
            Part::Sim => "sim",
            Part::Test => "test",
        })
    }
}

impl FromStr for Part {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "train" => Ok(Part::Train),
            "sim" => Ok(Part::Sim),
            "test" => Ok(Part::Test),
            other => Err(format!("unknown split `{other}` (expected train|sim|test)")),
        }
    }
}

/// Which part each sample belongs to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitAssignment {
    pub parts: Vec<Part>,
}

impl SplitAssignment {
    /// Shuffles `n` samples with `seed` and cuts them by `ratio`
    /// (train:sim:test). Train and sim sizes are rounded; test takes the rest.
    pub fn random(n: usize, ratio: [f64; 3], seed: u64) -> Result<Self, DataError> {
        if n < 3 {
            return Err(DataError::TooSmall(n));
        }
        if ratio.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
            return Err(DataError::BadRatio);
        }
        let total: f64 = ratio.iter().sum();
        let n_train = ((n as f64 * ratio[0] / total).round() as usize).clamp(1, n - 2);
        let n_sim = ((n as f64 * ratio[1] / total).round() as usize).clamp(1, n - n_train - 1);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut parts = vec![Part::Test; n];
        for (rank, &i) in order.iter().enumerate() {
            parts[i] = if rank < n_train {
                Part::Train
            } else if rank < n_train + n_sim {
                Part::Sim
            } else {
                Part::Test
            };
        }
        Ok(Self { parts })
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn indices(&self, part: Part) -> Vec<usize> {
        self.parts
            .iter()
            .enumerate()
            .filter_map(|(i, p)| (*p == part).then_some(i))
            .collect()
    }

    pub fn count(&self, part: Part) -> usize {
        self.parts.iter().filter(|p| **p == part).count()
    }

    /// One `train|sim|test` token per line.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let mut w = BufWriter::new(File::create(path)?);
        for p in &self.parts {
            writeln!(w, "{p}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let path_str = path.as_ref().display().to_string();
        let mut parts = Vec::new();
        for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            parts.push(line.parse().map_err(|msg| DataError::Parse {
                path: path_str.clone(),
                msg: format!("line {}: {msg}", i + 1),
            })?);
        }
        Ok(Self { parts })
    }

    pub fn check_len(&self, n: usize) -> Result<(), DataError> {
        if self.len() != n {
            return Err(DataError::SplitLength {
                expected: n,
                found: self.len(),
            });
        }
        Ok(())
    }
}

/// Linear-Gaussian regression data: `x ~ N(0, I)`,
/// `y = x . w + noise_std * eps` with fixed weights `w_j = 1 / (j + 1)`.
pub fn synthetic_linear_regression(n: usize, n_features: usize, noise_std: f64, seed: u64) -> TabularDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_simple_fn((n, n_features), || StandardNormal.sample(&mut rng));
    let w = Array1::from_shape_fn(n_features, |j| 1.0 / (j + 1) as f64);
    let noise = Normal::new(0.0, noise_std.max(0.0)).expect("valid noise");
    let y = x
        .dot(&w)
        .mapv(|v| v + if noise_std > 0.0 { noise.sample(&mut rng) } else { 0.0 });
    TabularDataset::new((0..n_features).map(|j| format!("x{j}")).collect(), x, Some(y))
}
