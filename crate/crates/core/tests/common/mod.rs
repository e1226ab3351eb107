//! Oracles shared by the property tests and the acceptance target.
#![allow(dead_code)]

use labelflow::flows::{FlowConfig, FlowModel};
use labelflow::objectives::PenaltyConfig;
use labelflow::trainer::{loss_and_gradient, Supervision};
use labelflow::weaksig::ClassificationSignals;
use ndarray::Array2;
use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

pub const FD_STEP: f64 = 1e-5;
/// Directional derivatives smaller than this are compared absolutely;
/// central differences cannot resolve them relative to the loss.
pub const FD_FLOOR: f64 = 1e-3;
pub const FD_DIRECTIONS: usize = 24;
pub const FD_COORDINATES: usize = 48;
/// Weight scale of random test flows. Much larger weights compound through
/// sixteen layers into losses whose differences lose the digits under test.
pub const PARAM_STD: f64 = 0.05;
pub const JAC_STEP: f64 = 1e-5;

/// A flow of the given shape with every parameter drawn from `N(0, std^2)`.
pub fn perturbed(cfg: FlowConfig, std: f64, rng: &mut ChaCha8Rng) -> FlowModel {
    let mut m = FlowModel::new(cfg, rng.random()).unwrap();
    let normal = Normal::new(0.0, std).unwrap();
    let flat: Vec<f64> = (0..m.params.total_dim()).map(|_| normal.sample(rng)).collect();
    m.params.set_flat(&flat).unwrap();
    m
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

/// Probe directions: random Gaussian directions over every parameter, then
/// single coordinates.
fn probes(dim: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = (0..FD_DIRECTIONS)
        .map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    for k in sample(rng, dim, FD_COORDINATES) {
        let mut e = vec![0.0; dim];
        e[k] = 1.0;
        out.push(e);
    }
    out
}

/// Largest relative gap between analytic and central-difference directional
/// derivatives of the full training loss.
pub fn fd_max_rel_error(
    model: &FlowModel,
    x: &Array2<f64>,
    sup: Supervision<'_>,
    draws: &[Array2<f64>],
    rng: &mut ChaCha8Rng,
) -> f64 {
    let penalty = PenaltyConfig::default();
    let (_, grad) = loss_and_gradient(model, x, sup, &penalty, draws).unwrap();
    let base = model.params.to_flat();
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for v in probes(base.len(), rng) {
        let mut at = |sign: f64| {
            let p: Vec<f64> = base.iter().zip(&v).map(|(b, d)| b + sign * FD_STEP * d).collect();
            probe.params.set_flat(&p).unwrap();
            loss_and_gradient(&probe, x, sup, &penalty, draws).unwrap().0
        };
        let numeric = (at(1.0) - at(-1.0)) / (2.0 * FD_STEP);
        let analytic: f64 = grad.iter().zip(&v).map(|(g, d)| g * d).sum();
        let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_FLOOR);
        worst = worst.max(err);
    }
    worst
}

/// Max of `|g^-1(g(z)) - z|` and `|g(g^-1(y)) - y|` over a batch.
pub fn round_trip_error(model: &FlowModel, rng: &mut ChaCha8Rng, rows: usize) -> f64 {
    let x = gaussian(rows, model.config.feature_dim, rng);
    let z = gaussian(rows, model.label_dim(), rng);
    let (y, _) = model.generate(x.view(), z.view()).unwrap();
    let back = model.invert(x.view(), y.view()).unwrap();
    let again = model.generate(x.view(), back.view()).unwrap().0;
    let e1 = (&back - &z).iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let e2 = (&again - &y).iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    e1.max(e2)
}

/// Max gap between the reported log-determinant and `log |det J|` of a
/// central-difference Jacobian of the generator.
pub fn logdet_error(model: &FlowModel, rng: &mut ChaCha8Rng, rows: usize) -> f64 {
    let k = model.label_dim();
    let x = gaussian(rows, model.config.feature_dim, rng);
    let z = gaussian(rows, k, rng);
    let (_, logdet) = model.generate(x.view(), z.view()).unwrap();
    // jac[c] holds column c of every row's Jacobian.
    let mut jac = vec![Array2::<f64>::zeros((rows, k)); k];
    for (c, col) in jac.iter_mut().enumerate() {
        let mut zp = z.clone();
        let mut zm = z.clone();
        zp.column_mut(c).mapv_inplace(|v| v + JAC_STEP);
        zm.column_mut(c).mapv_inplace(|v| v - JAC_STEP);
        let yp = model.generate(x.view(), zp.view()).unwrap().0;
        let ym = model.generate(x.view(), zm.view()).unwrap().0;
        *col = (yp - ym) / (2.0 * JAC_STEP);
    }
    (0..rows)
        .map(|i| {
            let det = if k == 1 {
                jac[0][[i, 0]]
            } else {
                jac[0][[i, 0]] * jac[1][[i, 1]] - jac[1][[i, 0]] * jac[0][[i, 1]]
            };
            (det.abs().ln() - logdet[i]).abs()
        })
        .fold(0.0, f64::max)
}

/// Signals with nulls, hard votes and soft votes mixed.
pub fn random_signals(n: usize, m: usize, null_rate: f64, rng: &mut ChaCha8Rng) -> ClassificationSignals {
    let probs = Array2::from_shape_simple_fn((n, m), || {
        if rng.random_bool(null_rate) {
            None
        } else if rng.random_bool(0.3) {
            Some(rng.random_range(0..2) as f64)
        } else {
            Some(rng.random::<f64>())
        }
    });
    let bounds = (0..m)
        .map(|_| [rng.random_range(0.0..0.5), rng.random_range(0.0..0.5)])
        .collect();
    ClassificationSignals::new(probs, bounds).unwrap()
}

/// Expected disagreement of `y` with signal `m` on class `j`, summed over
/// the samples the signal covers.
pub fn enumerate_lhs(y: &Array2<f64>, s: &ClassificationSignals, m: usize, j: usize) -> f64 {
    let mut total = 0.0;
    for i in 0..s.n_samples() {
        if let Some(q) = s.q(i, m, j) {
            total += y[[i, j]] * (1.0 - q) + (1.0 - y[[i, j]]) * q;
        }
    }
    total
}
