//! Numerical check of the dequantization bound on one-dimensional labels:
//! for a region `R` and density `p`, `E_{U(R)}[log p] <= log q - log |R|`
//! where `q = int_R p` (Jensen). The bound as printed, `M log q` with
//! `M = 1 / |R|`, is evaluated and reported alongside.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::flows::{FlowConfig, FlowError, FlowModel};

/// Absolute tolerance of every quadrature in this module.
pub const QUAD_TOL: f64 = 1e-8;
/// Slack allowed on the Jensen inequality.
pub const JENSEN_SLACK: f64 = 1e-9;
const MAX_INTERVALS: usize = 4000;

#[derive(Debug, thiserror::Error)]
pub enum TheoryError {
    #[error("quadrature on [{lo}, {hi}] did not reach tolerance {tol:e} (error estimate {estimate:e})")]
    NoConvergence { lo: f64, hi: f64, tol: f64, estimate: f64 },
    #[error("empty or reversed interval [{lo}, {hi}]")]
    BadInterval { lo: f64, hi: f64 },
    #[error("intervals {0} and {1} overlap")]
    Overlap(usize, usize),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

// 15-point Kronrod nodes on [-1, 1] (non-negative half) and weights; the odd
// indices are the 7-point Gauss nodes.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Kronrod estimate and `|Kronrod - Gauss|` on `[a, b]`. `f` maps a batch
/// of abscissae to integrand values.
fn gk15<F: FnMut(&[f64]) -> Vec<f64>>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    let mut xs = Vec::with_capacity(15);
    for &x in &XGK[..7] {
        xs.push(c - h * x);
        xs.push(c + h * x);
    }
    xs.push(c);
    let v = f(&xs);
    let mut kronrod = WGK[7] * v[14];
    let mut gauss = WG[3] * v[14];
    for k in 0..7 {
        let pair = v[2 * k] + v[2 * k + 1];
        kronrod += WGK[k] * pair;
        if k % 2 == 1 {
            gauss += WG[k / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Globally adaptive Gauss-Kronrod (7/15) quadrature on a finite interval:
/// the piece with the largest error estimate is bisected until the summed
/// estimate drops below `tol`.
pub fn integrate_finite<F: FnMut(&[f64]) -> Vec<f64>>(
    mut f: F,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<f64, TheoryError> {
    if !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(TheoryError::BadInterval { lo, hi });
    }
    if hi == lo {
        return Ok(0.0);
    }
    let mut heap = BinaryHeap::new();
    let (value, err) = gk15(&mut f, lo, hi);
    heap.push(Piece {
        a: lo,
        b: hi,
        value,
        err,
    });
    let mut total_err = err;
    while total_err > tol || !total_err.is_finite() {
        if heap.len() >= MAX_INTERVALS {
            return Err(TheoryError::NoConvergence {
                lo,
                hi,
                tol,
                estimate: total_err,
            });
        }
        let worst = heap.pop().expect("non-empty heap");
        let mid = 0.5 * (worst.a + worst.b);
        let left = gk15(&mut f, worst.a, mid);
        let right = gk15(&mut f, mid, worst.b);
        total_err += left.1 + right.1 - worst.err;
        heap.push(Piece {
            a: worst.a,
            b: mid,
            value: left.0,
            err: left.1,
        });
        heap.push(Piece {
            a: mid,
            b: worst.b,
            value: right.0,
            err: right.1,
        });
        if heap.len() % 64 == 0 {
            // Refresh the running sum to keep cancellation error in check.
            total_err = heap.iter().map(|p| p.err).sum();
        }
    }
    Ok(heap.iter().map(|p| p.value).sum())
}

/// Quadrature over an interval whose ends may be infinite. Infinite ends are
/// mapped onto `(-1, 1)` or `[0, 1)` by rational substitutions.
pub fn integrate<F: FnMut(&[f64]) -> Vec<f64>>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<f64, TheoryError> {
    if lo.is_nan() || hi.is_nan() || !(hi >= lo) {
        return Err(TheoryError::BadInterval { lo, hi });
    }
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => integrate_finite(f, lo, hi, tol),
        (false, false) => integrate_finite(
            |ts: &[f64]| {
                let ys: Vec<f64> = ts.iter().map(|t| t / (1.0 - t * t)).collect();
                f(&ys)
                    .into_iter()
                    .zip(ts)
                    .map(|(v, t)| v * (1.0 + t * t) / (1.0 - t * t).powi(2))
                    .collect()
            },
            -1.0,
            1.0,
            tol,
        ),
        (true, false) => integrate_finite(
            |ts: &[f64]| {
                let ys: Vec<f64> = ts.iter().map(|t| lo + t / (1.0 - t)).collect();
                f(&ys).into_iter().zip(ts).map(|(v, t)| v / (1.0 - t).powi(2)).collect()
            },
            0.0,
            1.0,
            tol,
        ),
        (false, true) => integrate_finite(
            |ts: &[f64]| {
                let ys: Vec<f64> = ts.iter().map(|t| hi - t / (1.0 - t)).collect();
                f(&ys).into_iter().zip(ts).map(|(v, t)| v / (1.0 - t).powi(2)).collect()
            },
            0.0,
            1.0,
            tol,
        ),
    }
}

/// A density over scalar labels.
pub trait Density1d {
    fn log_density(&self, ys: &[f64]) -> Vec<f64>;

    fn density(&self, ys: &[f64]) -> Vec<f64> {
        self.log_density(ys).into_iter().map(f64::exp).collect()
    }
}

/// `p(y | x)` of a scalar-label flow at a fixed input.
pub struct ConditionalDensity<'a> {
    pub model: &'a FlowModel,
    pub x: Array1<f64>,
}

impl Density1d for ConditionalDensity<'_> {
    fn log_density(&self, ys: &[f64]) -> Vec<f64> {
        let d = self.x.len();
        let x = Array2::from_shape_fn((ys.len(), d), |(_, j)| self.x[j]);
        let y = Array2::from_shape_vec((ys.len(), 1), ys.to_vec()).expect("column shape");
        self.model
            .log_prob(x.view(), y.view())
            .expect("conditional density dimensions are fixed at construction")
            .to_vec()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformDensity {
    pub lo: f64,
    pub hi: f64,
}

impl Density1d for UniformDensity {
    fn log_density(&self, ys: &[f64]) -> Vec<f64> {
        let l = -(self.hi - self.lo).ln();
        ys.iter()
            .map(|&y| {
                if (self.lo..=self.hi).contains(&y) {
                    l
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self, TheoryError> {
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(TheoryError::BadInterval { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    pub fn volume(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Per-sample dequantization regions; regions of distinct samples must be
/// disjoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstrainedRegion {
    pub intervals: Vec<Interval>,
}

impl ConstrainedRegion {
    pub fn new(intervals: Vec<Interval>) -> Result<Self, TheoryError> {
        let mut order: Vec<usize> = (0..intervals.len()).collect();
        order.sort_by(|&a, &b| intervals[a].lo.total_cmp(&intervals[b].lo));
        for w in order.windows(2) {
            if intervals[w[1]].lo < intervals[w[0]].hi {
                return Err(TheoryError::Overlap(w[0], w[1]));
            }
        }
        Ok(Self { intervals })
    }

    /// `M = max_i 1 / |R_i|`.
    pub fn m_const(&self) -> f64 {
        self.intervals.iter().map(|r| 1.0 / r.volume()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    /// `E_{U(R)}[log p]`.
    pub lhs: f64,
    /// `int_R p`.
    pub q: f64,
    /// `log q - log |R|`.
    pub jensen_rhs: f64,
    /// `M log q` with `M = 1 / |R|`.
    pub paper_rhs: f64,
    pub jensen_ok: bool,
    pub paper_ok: bool,
}

/// Probability mass of `region` (ends may be infinite).
pub fn region_mass(density: &impl Density1d, lo: f64, hi: f64) -> Result<f64, TheoryError> {
    integrate(|ys: &[f64]| density.density(ys), lo, hi, QUAD_TOL)
}

/// `q(y | x) = int_R p(y | x) dy` for a scalar-label flow.
pub fn relation_q(model: &FlowModel, x: &Array1<f64>, region: Interval) -> Result<f64, TheoryError> {
    region_mass(&ConditionalDensity { model, x: x.clone() }, region.lo, region.hi)
}

pub fn check_density_bound(density: &impl Density1d, region: Interval) -> Result<BoundCheck, TheoryError> {
    let vol = region.volume();
    let lhs = integrate_finite(|ys: &[f64]| density.log_density(ys), region.lo, region.hi, QUAD_TOL)? / vol;
    let q = region_mass(density, region.lo, region.hi)?;
    let jensen_rhs = q.ln() - vol.ln();
    let paper_rhs = q.ln() / vol;
    Ok(BoundCheck {
        lhs,
        q,
        jensen_rhs,
        paper_rhs,
        jensen_ok: lhs <= jensen_rhs + JENSEN_SLACK,
        paper_ok: lhs <= paper_rhs + JENSEN_SLACK,
    })
}

pub fn check_bound(model: &FlowModel, x: &Array1<f64>, region: Interval) -> Result<BoundCheck, TheoryError> {
    check_density_bound(&ConditionalDensity { model, x: x.clone() }, region)
}

/// Scalar-label flow with every weight drawn from `N(0, std^2)` (biases too).
pub fn random_flow<R: Rng + ?Sized>(feature_dim: usize, std: f64, rng: &mut R) -> Result<FlowModel, FlowError> {
    let mut model = FlowModel::new(FlowConfig::regression(feature_dim), rng.random())?;
    let normal = Normal::new(0.0, std).map_err(|e| FlowError::InvalidConfig(e.to_string()))?;
    for id in model.params.ids().collect::<Vec<_>>() {
        model.params.get_mut(id).mapv_inplace(|_| normal.sample(rng));
    }
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremRow {
    pub instance: usize,
    pub lo: f64,
    pub hi: f64,
    #[serde(flatten)]
    pub check: BoundCheck,
}

/// Instance 0 is a uniform density on its own region (Jensen holds with
/// equality); instances `1..n` are random flows with regions centred on a
/// draw from the flow.
pub fn theorem_check(n_instances: usize, seed: u64) -> Result<Vec<TheoremRow>, TheoryError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n_instances);
    for instance in 0..n_instances {
        let (region, check) = if instance == 0 {
            let r = Interval::new(0.3, 0.4)?;
            (r, check_density_bound(&UniformDensity { lo: r.lo, hi: r.hi }, r)?)
        } else {
            let model = random_flow(2, 0.1, &mut rng)?;
            let x = Array1::from_shape_simple_fn(2, || rng.sample(rand_distr::StandardNormal));
            let xm = x.clone().insert_axis(ndarray::Axis(0));
            let centre = model.sample_labels(xm.view(), 1, &mut rng)?[[0, 0]];
            let width = rng.random_range(0.05..2.0);
            let r = Interval::new(centre - width / 2.0, centre + width / 2.0)?;
            (r, check_bound(&model, &x, r)?)
        };
        rows.push(TheoremRow {
            instance,
            lo: region.lo,
            hi: region.hi,
            check,
        });
    }
    Ok(rows)
}
