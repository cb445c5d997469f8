use proptest::prelude::*;
use taylorcast_core::analytic_lab::*;
use taylorcast_core::baselines::euler_step;
use taylorcast_core::Tensor;

const FAMILIES: [Family; 3] = [Family::Sin, Family::Cos, Family::Exp];

proptest! {
    #[test]
    fn sine_derivatives_cycle(t in -20.0f64..20.0) {
        let d = analytic_derivatives(Family::Sin, t, 4).unwrap();
        prop_assert!((d[3] - t.sin()).abs() < 1e-12);
    }

    #[test]
    fn comparison_truth_is_direct_evaluation(t0 in -3.0f64..3.0, horizon in 0.1f64..3.0, dt in 0.05f64..0.5, fam in 0usize..3) {
        let family = FAMILIES[fam];
        for row in compare_euler_taylor(family, t0, horizon, 4, dt).unwrap() {
            prop_assert!((row.truth - family.value(t0 + row.tau)).abs() < 1e-12);
        }
    }

    #[test]
    fn order_one_taylor_is_one_euler_step(t0 in -3.0f64..3.0, tau in 0.01f64..2.0, fam in 0usize..3) {
        let family = FAMILIES[fam];
        let rows = compare_euler_taylor(family, t0, tau, 1, tau).unwrap();
        prop_assert_eq!(rows.len(), 2);
        prop_assert_eq!(rows[1].taylor.to_bits(), rows[1].euler.to_bits());
        let direct = euler_step(
            &Tensor::from_vec(vec![family.value(t0)]),
            &Tensor::from_vec(vec![family.derivative(t0, 1)]),
            tau,
        ).unwrap();
        prop_assert_eq!(direct.data()[0].to_bits(), rows[1].euler.to_bits());
    }
}

#[test]
fn averaged_error_shrinks_with_order() {
    for family in FAMILIES {
        for tau in [-1.0, -0.5, 0.25, 0.5, 1.0] {
            let errs: Vec<f64> = (1..=6)
                .map(|g| mean_taylor_error(family, tau, g, 64).unwrap())
                .collect();
            assert!(
                errs.windows(2).all(|w| w[0] >= w[1]),
                "{family} tau {tau}: {errs:?}"
            );
        }
    }
}

#[test]
fn taylor_beats_euler_on_sine_from_4_75() {
    let rows = compare_euler_taylor(Family::Sin, 4.75, 2.0, 4, 0.25).unwrap();
    assert_eq!(rows.len(), 9);
    let max = |f: fn(&ComparisonRow) -> f64| rows.iter().map(f).fold(0.0, f64::max);
    assert!(max(ComparisonRow::taylor_error) < max(ComparisonRow::euler_error));
    let csv = comparison_csv(&rows);
    assert!(csv.lines().nth(1).unwrap().starts_with("0.000000000e0,"));
}

#[test]
fn exact_coefficients_at_zero_offset() {
    for family in FAMILIES {
        assert_eq!(taylor_error(family, 0.7, 0.0, 4).unwrap(), 0.0);
    }
}

#[test]
fn dense_estimator_recovers_sine_derivatives() {
    let cfg = EstimatorConfig {
        steps: 6000,
        ..EstimatorConfig::default()
    };
    let (est, report) = fit_derivative_estimator(Family::Sin, &cfg).unwrap();
    assert!(report.final_loss.is_finite());
    assert!(report.abs_errors()[0] < 0.05, "{report:?}");
    let coeffs = est
        .estimate(&sample_window(Family::Sin, T_STAR, cfg.window, cfg.dt).unwrap())
        .unwrap();
    assert_eq!(coeffs.order(), 6);
    assert_eq!(coeffs.term(0).data()[0], T_STAR.sin());
    let table = derivative_table_csv(&[report]);
    assert_eq!(table.lines().count(), 5);
    assert!(fit_derivative_estimator(Family::Sin2D, &cfg).is_err());
}

#[test]
fn conv_estimator_recovers_fourth_term_on_grid() {
    let cfg = EstimatorConfig {
        width: 8,
        train_points: 4,
        ..EstimatorConfig::default()
    };
    let (_, report) = fit_sin2d_estimator(&cfg).unwrap();
    assert_eq!(report.fourth_term_diff.shape(), &[8, 8]);
    assert!(
        report.fourth_term_diff.mean() < 0.1,
        "{:?}",
        report.mean_abs_diff
    );
}

#[test]
fn estimator_config_checked() {
    let low = EstimatorConfig {
        order: 3,
        ..EstimatorConfig::default()
    };
    assert!(DerivativeEstimator::new(low).is_err());
    let bad = EstimatorConfig {
        dt: 0.0,
        ..EstimatorConfig::default()
    };
    assert!(fit_derivative_estimator(Family::Exp, &bad).is_err());
}
