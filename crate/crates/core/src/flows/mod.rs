//! Conditional normalizing flows over labels.
//!
//! The flow is parameterized in the generative direction: each layer maps a
//! latent-side value `r` to `s(x, ...) * r + b(x, ...)`, so sampling and the
//! log-determinant of the generator need no division. Densities are obtained
//! by running the layers backwards:
//!
//! `log p(y|x) = log N(z; 0, I) - sum_k log|s_k|`, with `z` the inverse of `y`.
//!
//! Scales are `exp(clamp(raw, -c, c))`, so every layer stays invertible for
//! any finite parameters.

mod checkpoint;
mod mlp;

use std::f64::consts::PI;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::diff::{DiffError, ParamStore, Tape, Var};

pub use checkpoint::CHECKPOINT_FORMAT;
pub use mlp::Mlp;

#[derive(Debug, thiserror::Error)]
pub enum FlowError {
    #[error("{what}: expected dimension {expected}, found {found}")]
    DimMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid flow configuration: {0}")]
    InvalidConfig(String),
    #[error("corrupt checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowKind {
    /// Steps of two conditional affine couplings over a 2-dim label.
    Coupling,
    /// Stack of scalar conditional affine transforms over a 1-dim label.
    Affine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub kind: FlowKind,
    pub label_dim: usize,
    pub feature_dim: usize,
    /// Coupling: number of steps (two layers each). Affine: number of layers.
    pub steps: usize,
    pub hidden: usize,
    pub init_std: f64,
    /// Raw scale outputs are clamped to `[-c, c]` before exponentiation.
    pub log_scale_clamp: f64,
}

impl FlowConfig {
    /// 8 steps x 2 couplings, hidden width 64.
    pub fn classification(feature_dim: usize) -> Self {
        Self {
            kind: FlowKind::Coupling,
            label_dim: 2,
            feature_dim,
            steps: 8,
            hidden: 64,
            init_std: 0.01,
            log_scale_clamp: 5.0,
        }
    }

    /// 8 scalar affine layers whose scale/shift nets have three linear layers.
    pub fn regression(feature_dim: usize) -> Self {
        Self {
            kind: FlowKind::Affine,
            label_dim: 1,
            feature_dim,
            steps: 8,
            hidden: 64,
            init_std: 0.01,
            log_scale_clamp: 5.0,
        }
    }

    fn validate(&self) -> Result<(), FlowError> {
        let bad = |m: &str| Err(FlowError::InvalidConfig(m.to_string()));
        match self.kind {
            FlowKind::Coupling if self.label_dim != 2 => bad("coupling flows need label_dim = 2"),
            FlowKind::Affine if self.label_dim != 1 => bad("affine flows need label_dim = 1"),
            _ if self.feature_dim == 0 => bad("feature_dim must be positive"),
            _ if self.steps == 0 => bad("at least one flow step is required"),
            _ if self.hidden == 0 => bad("hidden width must be positive"),
            _ if !(self.log_scale_clamp > 0.0) => bad("log_scale_clamp must be positive"),
            _ if !(self.init_std >= 0.0) => bad("init_std must be non-negative"),
            _ => Ok(()),
        }
    }
}

/// Conditional affine coupling on a 2-dim label: coordinate `transform` is
/// scaled and shifted using the other coordinate and `x`.
///
/// `s = m_s(w_y(y_a) * w_x(x) + w_b(x))`, `b = m_b(c_y(y_a) * c_x(x) + c_b(x))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingLayer {
    pub transform: usize,
    pub w_y: Mlp,
    pub w_x: Mlp,
    pub w_b: Mlp,
    pub c_y: Mlp,
    pub c_x: Mlp,
    pub c_b: Mlp,
    pub m_s: Mlp,
    pub m_b: Mlp,
}

/// Scalar conditional affine transform `y = s(x) * z + b(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineLayer {
    pub s_net: Mlp,
    pub b_net: Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
// A model holds a handful of layers, so the unboxed variant costs little.
#[allow(clippy::large_enum_variant)]
pub enum FlowLayer {
    Coupling(CouplingLayer),
    Affine(AffineLayer),
}

/// Tape handles produced by [`FlowModel::generate_on`].
#[derive(Debug, Clone)]
pub struct FlowTrace {
    /// Generated label, one `N x 1` node per label coordinate.
    pub y: Vec<Var>,
    /// `N x 1` sum of generator log-scales.
    pub logdet: Var,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowModel {
    pub config: FlowConfig,
    pub layers: Vec<FlowLayer>,
    pub params: ParamStore,
    pub seed: u64,
}

/// `log N(z; 0, I)` for each row of `z`.
pub fn std_normal_log_density(z: ArrayView2<'_, f64>) -> Array1<f64> {
    let d = z.ncols() as f64;
    z.rows()
        .into_iter()
        .map(|r| -0.5 * d * (2.0 * PI).ln() - 0.5 * r.dot(&r))
        .collect()
}

fn column(a: &Array2<f64>, j: usize) -> Array2<f64> {
    a.column(j).to_owned().insert_axis(Axis(1))
}

impl FlowModel {
    /// Builds a near-identity flow with parameters drawn from `seed`.
    pub fn new(config: FlowConfig, seed: u64) -> Result<Self, FlowError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let (d, h, std) = (config.feature_dim, config.hidden, config.init_std);
        let mut layers = Vec::new();
        match config.kind {
            FlowKind::Coupling => {
                for step in 0..config.steps {
                    for transform in 0..2 {
                        let p = format!("step{step}.coupling{transform}");
                        let mut mlp = |name: &str, widths: &[usize]| {
                            Mlp::build(&mut params, &format!("{p}.{name}"), widths, std, &mut rng)
                        };
                        layers.push(FlowLayer::Coupling(CouplingLayer {
                            transform,
                            w_y: mlp("w_y", &[1, h, h])?,
                            w_x: mlp("w_x", &[d, h, h])?,
                            w_b: mlp("w_b", &[d, h, h])?,
                            c_y: mlp("c_y", &[1, h, h])?,
                            c_x: mlp("c_x", &[d, h, h])?,
                            c_b: mlp("c_b", &[d, h, h])?,
                            m_s: mlp("m_s", &[h, 1])?,
                            m_b: mlp("m_b", &[h, 1])?,
                        }));
                    }
                }
            }
            FlowKind::Affine => {
                for k in 0..config.steps {
                    let mut mlp =
                        |name: &str| Mlp::build(&mut params, &format!("layer{k}.{name}"), &[d, h, h, 1], std, &mut rng);
                    layers.push(FlowLayer::Affine(AffineLayer {
                        s_net: mlp("s_net")?,
                        b_net: mlp("b_net")?,
                    }));
                }
            }
        }
        Ok(Self {
            config,
            layers,
            params,
            seed,
        })
    }

    pub fn label_dim(&self) -> usize {
        self.config.label_dim
    }

    fn check_inputs(
        &self,
        x: ArrayView2<'_, f64>,
        other: ArrayView2<'_, f64>,
        what: &'static str,
    ) -> Result<(), FlowError> {
        if x.ncols() != self.config.feature_dim {
            return Err(FlowError::DimMismatch {
                what: "feature columns",
                expected: self.config.feature_dim,
                found: x.ncols(),
            });
        }
        if other.ncols() != self.config.label_dim {
            return Err(FlowError::DimMismatch {
                what,
                expected: self.config.label_dim,
                found: other.ncols(),
            });
        }
        if other.nrows() != x.nrows() {
            return Err(FlowError::DimMismatch {
                what: "rows",
                expected: x.nrows(),
                found: other.nrows(),
            });
        }
        Ok(())
    }

    /// Log-scale and shift of one layer given the current (pre-layer) state.
    fn layer_params(&self, tape: &Tape, layer: &FlowLayer, x: Var, cols: &[Var]) -> (usize, Var, Var) {
        let p = &self.params;
        let c = self.config.log_scale_clamp;
        match layer {
            FlowLayer::Coupling(l) => {
                let ya = cols[1 - l.transform];
                let hs = tape.add(
                    tape.mul(l.w_y.forward(tape, p, ya), l.w_x.forward(tape, p, x)),
                    l.w_b.forward(tape, p, x),
                );
                let hb = tape.add(
                    tape.mul(l.c_y.forward(tape, p, ya), l.c_x.forward(tape, p, x)),
                    l.c_b.forward(tape, p, x),
                );
                let log_s = tape.clamp(l.m_s.forward(tape, p, hs), -c, c);
                (l.transform, log_s, l.m_b.forward(tape, p, hb))
            }
            FlowLayer::Affine(l) => {
                let log_s = tape.clamp(l.s_net.forward(tape, p, x), -c, c);
                (0, log_s, l.b_net.forward(tape, p, x))
            }
        }
    }

    /// Records `y = g(x, z)` on `tape`. `x` is `N x D`; `z` holds one `N x 1`
    /// node per label coordinate.
    pub fn generate_on(&self, tape: &Tape, x: Var, z: Vec<Var>) -> FlowTrace {
        assert_eq!(z.len(), self.config.label_dim, "latent coordinate count");
        let mut cols = z;
        let mut logdet: Option<Var> = None;
        for layer in &self.layers {
            let (t, log_s, shift) = self.layer_params(tape, layer, x, &cols);
            cols[t] = tape.add(tape.mul(tape.exp(log_s), cols[t]), shift);
            logdet = Some(match logdet {
                Some(acc) => tape.add(acc, log_s),
                None => log_s,
            });
        }
        FlowTrace {
            y: cols,
            logdet: logdet.expect("at least one layer"),
        }
    }

    /// Records the inverse map `z = g^{-1}(x, y)` and the generator log-det at `z`.
    pub fn invert_on(&self, tape: &Tape, x: Var, y: Vec<Var>) -> FlowTrace {
        assert_eq!(y.len(), self.config.label_dim, "label coordinate count");
        let mut cols = y;
        let mut logdet: Option<Var> = None;
        for layer in self.layers.iter().rev() {
            // The conditioning coordinate is untouched by the layer, so its
            // post-layer value equals the pre-layer value used in generation.
            let (t, log_s, shift) = self.layer_params(tape, layer, x, &cols);
            let inv_s = tape.exp(tape.neg(log_s));
            cols[t] = tape.mul(tape.sub(cols[t], shift), inv_s);
            logdet = Some(match logdet {
                Some(acc) => tape.add(acc, log_s),
                None => log_s,
            });
        }
        FlowTrace {
            y: cols,
            logdet: logdet.expect("at least one layer"),
        }
    }

    fn split_cols(tape: &Tape, a: ArrayView2<'_, f64>) -> Vec<Var> {
        let a = a.to_owned();
        (0..a.ncols()).map(|j| tape.constant(column(&a, j))).collect()
    }

    fn join_cols(tape: &Tape, cols: &[Var]) -> Array2<f64> {
        let first = tape.value(cols[0]);
        let mut out = Array2::zeros((first.nrows(), cols.len()));
        drop(first);
        for (j, &c) in cols.iter().enumerate() {
            out.column_mut(j).assign(&tape.value(c).column(0));
        }
        out
    }

    fn logdet_vec(tape: &Tape, v: Var) -> Array1<f64> {
        tape.value(v).column(0).to_owned()
    }

    /// Generated labels (`N x label_dim`) and per-row generator log-determinants.
    pub fn generate(
        &self,
        x: ArrayView2<'_, f64>,
        z: ArrayView2<'_, f64>,
    ) -> Result<(Array2<f64>, Array1<f64>), FlowError> {
        self.check_inputs(x, z, "latent columns")?;
        let tape = Tape::new();
        let xv = tape.constant(x.to_owned());
        let trace = self.generate_on(&tape, xv, Self::split_cols(&tape, z));
        Ok((Self::join_cols(&tape, &trace.y), Self::logdet_vec(&tape, trace.logdet)))
    }

    /// Latent codes for the labels `y`.
    pub fn invert(&self, x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<Array2<f64>, FlowError> {
        self.check_inputs(x, y, "label columns")?;
        let tape = Tape::new();
        let xv = tape.constant(x.to_owned());
        let trace = self.invert_on(&tape, xv, Self::split_cols(&tape, y));
        Ok(Self::join_cols(&tape, &trace.y))
    }

    /// `log p(y|x)` per row.
    pub fn log_prob(&self, x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<Array1<f64>, FlowError> {
        self.check_inputs(x, y, "label columns")?;
        let tape = Tape::new();
        let xv = tape.constant(x.to_owned());
        let trace = self.invert_on(&tape, xv, Self::split_cols(&tape, y));
        let z = Self::join_cols(&tape, &trace.y);
        let logdet = Self::logdet_vec(&tape, trace.logdet);
        Ok(std_normal_log_density(z.view()) - logdet)
    }

    /// Standard-normal latent draws, filled row-major.
    pub fn draw_latent<R: Rng + ?Sized>(&self, rows: usize, rng: &mut R) -> Array2<f64> {
        Array2::from_shape_simple_fn((rows, self.config.label_dim), || rng.sample(StandardNormal))
    }

    /// Mean of `samples` generated labels per row of `x`.
    pub fn sample_labels<R: Rng + ?Sized>(
        &self,
        x: ArrayView2<'_, f64>,
        samples: usize,
        rng: &mut R,
    ) -> Result<Array2<f64>, FlowError> {
        if samples == 0 {
            return Err(FlowError::InvalidConfig("sample count must be at least 1".into()));
        }
        let mut acc = Array2::zeros((x.nrows(), self.config.label_dim));
        for _ in 0..samples {
            let z = self.draw_latent(x.nrows(), rng);
            acc += &self.generate(x, z.view())?.0;
        }
        Ok(acc / samples as f64)
    }
}
