//! Vectorized constraint terms against element-by-element enumeration.

mod common;

use common::{enumerate_lhs, random_signals};
use labelflow::objectives::{
    classification_penalty, regression_penalty, ClassificationConstraint, PenaltyConfig, RegressionConstraint,
};
use labelflow::weaksig::{RegressionRule, RegressionRuleSignals};
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const EXACT_TOL: f64 = 1e-12;

#[test]
fn weak_signal_lhs_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let n = rng.random_range(1..20);
        let m = rng.random_range(1..6);
        let s = random_signals(n, m, 0.3, &mut rng);
        let y = Array2::from_shape_simple_fn((n, 2), || rng.random_range(-0.2..1.2));
        let cons = ClassificationConstraint::new(&s);
        let lhs = cons.lhs(y.view()).unwrap();
        let slack = cons.slack(y.view()).unwrap();
        for sig in 0..m {
            for j in 0..2 {
                let want = enumerate_lhs(&y, &s, sig, j);
                assert!(
                    (lhs[[sig, j]] - want).abs() < EXACT_TOL,
                    "lhs {} vs {}",
                    lhs[[sig, j]],
                    want
                );
                let rhs = s.coverage(sig) as f64 * s.bound(sig, j);
                assert!((slack[[sig, j]] - (want - rhs)).abs() < EXACT_TOL);
            }
        }
    }
}

#[test]
fn classification_penalty_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let cfg = PenaltyConfig {
        lambda1: 1.5,
        lambda2: 2.5,
        lambda3: 3.5,
        lambda4: 4.5,
        ..Default::default()
    };
    for _ in 0..50 {
        let n = rng.random_range(1..15);
        let m = rng.random_range(1..4);
        let s = random_signals(n, m, 0.3, &mut rng);
        let y: Array2<f64> = Array2::from_shape_simple_fn((n, 2), || rng.random_range(-0.5..1.5));
        let mut want = 0.0_f64;
        for v in y.iter() {
            want += cfg.lambda1 * (-v).max(0.0).powi(2) + cfg.lambda2 * (v - 1.0).max(0.0).powi(2);
        }
        for row in y.rows() {
            want += cfg.lambda3 * (row.sum() - 1.0).powi(2);
        }
        for sig in 0..m {
            for j in 0..2 {
                let over = enumerate_lhs(&y, &s, sig, j) - s.coverage(sig) as f64 * s.bound(sig, j);
                want += cfg.lambda4 * over.max(0.0).powi(2);
            }
        }
        let got = classification_penalty(y.view(), &s, &cfg).unwrap();
        assert!((got - want).abs() < 1e-10 * want.abs().max(1.0), "{got} vs {want}");
    }
}

#[test]
fn group_means_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..50 {
        let n = rng.random_range(4..30);
        let d = rng.random_range(1..4);
        let x = Array2::from_shape_simple_fn((n, d), || rng.sample::<f64, _>(StandardNormal));
        let rules: Vec<RegressionRule> = (0..rng.random_range(1..4))
            .map(|_| {
                let feature = rng.random_range(0..d);
                // Threshold at a sample value keeps both groups non-empty
                // unless that value is the column minimum.
                let mut col: Vec<f64> = x.column(feature).to_vec();
                col.sort_by(f64::total_cmp);
                let threshold = col[rng.random_range(1..n)];
                RegressionRule {
                    feature,
                    threshold,
                    above: rng.random(),
                    below: rng.random(),
                }
            })
            .collect();
        let rules = RegressionRuleSignals { rules };
        let y: Array1<f64> = Array1::from_shape_simple_fn(n, || rng.random_range(-0.2..1.2));
        let cons = RegressionConstraint::new(&rules, x.view()).unwrap();
        let slack = cons.slack(&y).unwrap();
        for (k, r) in rules.rules.iter().enumerate() {
            let (mut sa, mut na, mut sb, mut nb) = (0.0, 0, 0.0, 0);
            for i in 0..n {
                if r.is_above(x.row(i)) {
                    sa += y[i];
                    na += 1;
                } else {
                    sb += y[i];
                    nb += 1;
                }
            }
            assert!((slack[[k, 0]] - (sa / na as f64 - r.above)).abs() < EXACT_TOL);
            assert!((slack[[k, 1]] - (sb / nb as f64 - r.below)).abs() < EXACT_TOL);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn classification_penalty_is_permutation_invariant(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, m) = (rng.random_range(2..12), rng.random_range(1..4));
        let s = random_signals(n, m, 0.2, &mut rng);
        let y = Array2::from_shape_simple_fn((n, 2), || rng.random_range(-0.3..1.3));
        let cfg = PenaltyConfig::default();
        let base = classification_penalty(y.view(), &s, &cfg).unwrap();

        let mut rows: Vec<usize> = (0..n).collect();
        rows.shuffle(&mut rng);
        let y_perm = Array2::from_shape_fn((n, 2), |(i, j)| y[[rows[i], j]]);
        let by_rows = classification_penalty(y_perm.view(), &s.permute_samples(&rows), &cfg).unwrap();
        prop_assert!((by_rows - base).abs() <= 1e-10 * base.abs().max(1.0));

        let mut cols: Vec<usize> = (0..m).collect();
        cols.shuffle(&mut rng);
        let by_cols = classification_penalty(y.view(), &s.permute_signals(&cols), &cfg).unwrap();
        prop_assert!((by_cols - base).abs() <= 1e-10 * base.abs().max(1.0));
    }

    #[test]
    fn regression_penalty_is_row_permutation_invariant(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(4..20);
        let x = Array2::from_shape_fn((n, 1), |(i, _)| i as f64);
        let rules = RegressionRuleSignals {
            rules: vec![RegressionRule { feature: 0, threshold: (n / 2) as f64, above: 0.8, below: 0.1 }],
        };
        let y: Array1<f64> = Array1::from_shape_simple_fn(n, || rng.random());
        let cfg = PenaltyConfig::default();
        let base = regression_penalty(&y, &rules, x.view(), &cfg).unwrap();
        let mut rows: Vec<usize> = (0..n).collect();
        rows.shuffle(&mut rng);
        let xp = Array2::from_shape_fn((n, 1), |(i, _)| x[[rows[i], 0]]);
        let yp = Array1::from_shape_fn(n, |i| y[rows[i]]);
        let permuted = regression_penalty(&yp, &rules, xp.view(), &cfg).unwrap();
        prop_assert!((permuted - base).abs() <= 1e-10 * base.abs().max(1.0));
    }
}
