mod common;

use common::*;
use proptest::prelude::*;
use stemsim_core::fit::{normal_equation_residual, MAX_CONDITION};
use stemsim_core::{condition_report, fit, predict_weighted, DesignMatrix, Error, FeatureVector, FitConfig, StemConfig, StemKind, WeightVector};

fn configs() -> [StemConfig; 2] {
    [StemConfig::four_stem(), StemConfig::six_stem()]
}

#[test]
fn ols_and_ridge_match_normal_equation_oracle() {
    let mut r = rng(11);
    for round in 0..100 {
        for config in configs() {
            let (rows, labels) = random_design(&mut r, &config, 50);
            let d = design(&config, &rows, &labels);
            for lambda in [0.0, 0.5, 3.0] {
                let cfg = if lambda == 0.0 { FitConfig::ols() } else { FitConfig::ridge(lambda) };
                let w = fit(&d, &cfg).unwrap();
                let oracle = oracle_fit(&rows, &labels, lambda);
                let diff = rel_diff(w.values(), &oracle);
                assert!(diff < 1e-9, "round {round} {config} λ={lambda}: {diff:e}");
                assert!(normal_equation_residual(&d, lambda, &w) < 1e-9);
            }
        }
    }
}

#[test]
fn condition_matches_jacobi_eigenvalue_ratio() {
    let mut r = rng(12);
    for config in configs() {
        for _ in 0..20 {
            let (rows, labels) = random_design(&mut r, &config, 40);
            let (gram, _) = normal_equations(&rows, &labels, 0.0);
            let eig = jacobi_eigenvalues(gram);
            let max = eig.iter().cloned().fold(f64::MIN, f64::max);
            let min = eig.iter().cloned().fold(f64::MAX, f64::min);
            let got = condition_report(&design(&config, &rows, &labels));
            assert!((got - max / min).abs() / (max / min) < 1e-8, "{got} vs {}", max / min);
        }
    }
}

#[test]
fn collinear_columns_are_singular_for_ols_only() {
    let config = StemConfig::four_stem();
    let mut r = rng(13);
    let (mut rows, labels) = random_design(&mut r, &config, 30);
    for row in &mut rows {
        row[1] = row[0];
    }
    let d = design(&config, &rows, &labels);
    assert!(condition_report(&d) > MAX_CONDITION);
    assert!(matches!(fit(&d, &FitConfig::ols()), Err(Error::SingularSystem { .. })));
    assert!(matches!(fit(&d, &FitConfig::ridge(0.0)), Err(Error::SingularSystem { .. })));
    let w = fit(&d, &FitConfig::ridge(1.0)).unwrap();
    assert!(rel_diff(w.values(), &oracle_fit(&rows, &labels, 1.0)) < 1e-9);
    // the penalty splits the shared column evenly
    assert!((w.values()[0] - w.values()[1]).abs() < 1e-12);
}

#[test]
fn ridge_shrinks_monotonically_and_zero_lambda_is_ols() {
    let mut r = rng(14);
    for config in configs() {
        for _ in 0..25 {
            let (rows, labels) = random_design(&mut r, &config, 50);
            let d = design(&config, &rows, &labels);
            let ols = fit(&d, &FitConfig::ols()).unwrap();
            let zero = fit(&d, &FitConfig::ridge(0.0)).unwrap();
            assert!(rel_diff(zero.values(), ols.values()) <= 1e-12);
            let norms: Vec<f64> = [0.0, 0.1, 1.0, 10.0, 100.0]
                .iter()
                .map(|&l| fit(&d, &FitConfig::ridge(l)).unwrap().norm())
                .collect();
            assert!(norms.windows(2).all(|p| p[1] <= p[0] * (1.0 + 1e-12)), "{norms:?}");
        }
    }
}

#[test]
fn underdetermined_ols_fails_ridge_succeeds() {
    let config = StemConfig::six_stem();
    let mut r = rng(15);
    let (rows, labels) = random_design(&mut r, &config, 4);
    let d = design(&config, &rows, &labels);
    assert!(matches!(fit(&d, &FitConfig::ols()), Err(Error::SingularSystem { .. })));
    let w = fit(&d, &FitConfig::ridge(0.1)).unwrap();
    assert!(rel_diff(w.values(), &oracle_fit(&rows, &labels, 0.1)) < 1e-9);
}

fn design_strategy() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
    (8usize..40).prop_flat_map(|n| {
        (
            prop::collection::vec(prop::collection::vec(-2.0f64..=2.0, 5), n),
            prop::collection::vec(prop::bool::ANY.prop_map(|b| if b { 1.0 } else { -1.0 }), n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn zero_features_always_tie(ws in prop::collection::vec(-100.0f64..100.0, 7)) {
        let config = StemConfig::six_stem();
        let w = WeightVector::new(config.clone(), ws).unwrap();
        let p = predict_weighted(&FeatureVector::zeros(config), &w).unwrap();
        prop_assert_eq!(p.choice, stemsim_core::Choice::Tie);
        prop_assert_eq!(p.score.to_bits(), 0.0f64.to_bits());
    }

    #[test]
    fn flipping_labels_negates_weights((rows, labels) in design_strategy(), lambda in 0.01f64..10.0) {
        let config = StemConfig::four_stem();
        let flipped: Vec<f64> = labels.iter().map(|y| -y).collect();
        let w = fit(&design(&config, &rows, &labels), &FitConfig::ridge(lambda)).unwrap();
        let v = fit(&design(&config, &rows, &flipped), &FitConfig::ridge(lambda)).unwrap();
        for (a, b) in w.values().iter().zip(v.values()) {
            prop_assert!((a + b).abs() <= 1e-9 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn fit_is_row_order_invariant((rows, labels) in design_strategy(), lambda in 0.01f64..10.0) {
        let config = StemConfig::four_stem();
        let w = fit(&design(&config, &rows, &labels), &FitConfig::ridge(lambda)).unwrap();
        let rrows: Vec<_> = rows.iter().rev().cloned().collect();
        let rlabels: Vec<_> = labels.iter().rev().cloned().collect();
        let v = fit(&design(&config, &rrows, &rlabels), &FitConfig::ridge(lambda)).unwrap();
        prop_assert!(rel_diff(v.values(), w.values()) < 1e-9);
    }

    #[test]
    fn permuting_channels_permutes_weights((rows, labels) in design_strategy(), lambda in 0.01f64..10.0) {
        let config = StemConfig::four_stem();
        let order = [StemKind::Residuals, StemKind::Vocals, StemKind::Bass, StemKind::Drums, StemKind::Mix];
        let permuted = StemConfig::new("permuted", order.to_vec()).unwrap();
        let idx: Vec<usize> = order.iter().map(|s| config.position(*s).unwrap()).collect();
        let prows: Vec<Vec<f64>> = rows.iter().map(|r| idx.iter().map(|&i| r[i]).collect()).collect();
        let w = fit(&design(&config, &rows, &labels), &FitConfig::ridge(lambda)).unwrap();
        let v = fit(&DesignMatrix::new(permuted, prows, labels).unwrap(), &FitConfig::ridge(lambda)).unwrap();
        for s in order {
            let (a, b) = (w.get(s).unwrap(), v.get(s).unwrap());
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }
    }
}
