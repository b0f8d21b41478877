mod support;

use mtsysid::analysis::{cross_validate_regressions, estimate_phi_regressions, in_sample_prediction_error};
use mtsysid::estimators::{ls_estimate_regression, vectorize_regression};
use mtsysid::solver::lambda_max_regressions;
use mtsysid::{
    bound_lambda, cross_validate, estimate_phi, frobenius_errors, oracle_bundle_micro, prediction_error_score, solve,
    theorem1_check, theorem2_check, Error, MatrixBundle, MultiSystemDataset, RegressionData, RegularizerSpec,
    SolverConfig, SupportSet, SystemRecord, Trajectory,
};
use nalgebra::DMatrix;
use proptest::prelude::*;
use support::oracles::*;
use support::{excited_dataset, normal_bundle, normal_matrix, rng, sparse_truth};

fn scaled(dataset: &MultiSystemDataset, c: f64) -> MultiSystemDataset {
    MultiSystemDataset::new(
        dataset
            .entries()
            .iter()
            .map(|e| SystemRecord {
                trajectory: Trajectory::new(e.trajectory.states() * c, e.trajectory.inputs() * c).unwrap(),
                b_matrix: e.b_matrix.clone(),
            })
            .collect(),
    )
    .unwrap()
}

#[test]
fn score_matches_independent_r_squared() {
    for seed in 0..20u64 {
        let mut r = rng(seed);
        let x = normal_matrix(&mut r, 3, 25);
        let y = normal_matrix(&mut r, 3, 25);
        let a = normal_matrix(&mut r, 3, 3) * 0.4;
        let test = RegressionData::new(x.clone(), y.clone()).unwrap();
        let got = prediction_error_score(&a, &test).unwrap();
        assert!((got - one_minus_mean_r2(&a, &x, &y)).abs() < 1e-10);
    }
}

#[test]
fn score_of_mean_predictor_is_one() {
    let x = DMatrix::from_row_slice(2, 4, &[1.0, 2.0, 3.0, 4.0, -1.0, 0.0, 1.0, 0.0]);
    let y = DMatrix::from_row_slice(2, 4, &[1.0, -1.0, 2.0, -2.0, 0.5, -0.5, 0.0, 0.0]);
    let test = RegressionData::new(x, y).unwrap();
    assert!((prediction_error_score(&DMatrix::zeros(2, 2), &test).unwrap() - 1.0).abs() < 1e-15);
}

#[test]
fn constant_target_is_reported() {
    let x = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 0.0, 1.0, 0.0]);
    let y = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.0, 4.0, 4.0, 4.0]);
    let test = RegressionData::new(x, y).unwrap();
    match prediction_error_score(&DMatrix::zeros(2, 2), &test) {
        Err(Error::DegenerateCoordinates(k)) => assert_eq!(k, vec![1]),
        other => panic!("expected degenerate coordinates, got {other:?}"),
    }
}

#[test]
fn frobenius_errors_match_direct_sums() {
    let mut r = rng(4);
    let a = normal_bundle(&mut r, 3, 4, 1.0);
    let b = normal_bundle(&mut r, 3, 4, 1.0);
    let errs = frobenius_errors(&a, &b).unwrap();
    for (k, e) in errs.iter().enumerate() {
        let direct: f64 = a.matrices()[k]
            .iter()
            .zip(b.matrices()[k].iter())
            .map(|(p, q)| (p - q) * (p - q))
            .sum::<f64>()
            .sqrt();
        assert!((e - direct).abs() < 1e-12);
    }
}

#[test]
fn phi_scales_quadratically_with_states() {
    let mut r = rng(5);
    let truth = sparse_truth(&mut r, 4, 3, 0.4);
    let data = excited_dataset(&truth, 20, 0.1, 5);
    let support = SupportSet::new(4, [(0, 0), (1, 2), (3, 1)]).unwrap();
    let base = estimate_phi(&data, &support, 500, 9).unwrap();
    for c in [0.5, 2.0, 3.0] {
        let phi = estimate_phi(&scaled(&data, c), &support, 500, 9).unwrap();
        assert!((phi - c * c * base).abs() <= 1e-12 * phi, "c = {c}");
    }
}

#[test]
fn phi_is_a_running_minimum() {
    let mut r = rng(6);
    let truth = sparse_truth(&mut r, 4, 3, 0.4);
    let data = excited_dataset(&truth, 20, 0.1, 6);
    let support = SupportSet::new(4, [(0, 1), (2, 2)]).unwrap();
    let mut last = f64::INFINITY;
    for samples in [1, 10, 100, 1000] {
        let phi = estimate_phi(&data, &support, samples, 3).unwrap();
        assert!(phi > 0.0 && phi <= last);
        last = phi;
    }
}

#[test]
fn prediction_error_sum_has_vectorized_form() {
    for seed in 0..10u64 {
        let mut r = rng(seed);
        let truth = sparse_truth(&mut r, 4, 3, 0.5);
        let data = excited_dataset(&truth, 15, 0.1, seed);
        let blocks = RegressionData::from_dataset(&data).unwrap();
        let est = normal_bundle(&mut r, 4, 3, 0.2);
        let trajectory_form = in_sample_prediction_error(&blocks, &truth, &est).unwrap();
        let vectorized: f64 = blocks
            .iter()
            .zip(truth.iter().zip(est.iter()))
            .map(|(d, (t, e))| {
                let v = vectorize_regression(d);
                let diff = t - e;
                (&v.x_tilde * nalgebra::DVector::from_column_slice(diff.as_slice())).norm_squared()
            })
            .sum();
        assert!((trajectory_form - vectorized).abs() <= 1e-8 * vectorized.max(1.0));
    }
}

#[test]
fn exact_estimate_satisfies_bound_trivially() {
    let mut r = rng(7);
    let truth = sparse_truth(&mut r, 3, 3, 0.5);
    let data = excited_dataset(&truth, 30, 0.05, 7);
    let lambda = bound_lambda(&data, 0.05, 3.0).unwrap();
    let diag = theorem1_check(&data, &truth, &truth, lambda, 3.0, 0.05, 200, 1).unwrap();
    assert_eq!(diag.lhs, 0.0);
    assert!(diag.holds && diag.holds_phi_squared);
    assert!(diag.rhs_underestimated);
    assert!(!diag.caveat().is_empty());
    assert!(matches!(
        theorem1_check(&data, &truth, &truth, 0.5 * lambda, 3.0, 0.05, 200, 1),
        Err(Error::LambdaBelowThreshold { .. })
    ));
}

#[test]
fn oracle_without_penalty_is_full_least_squares() {
    let mut r = rng(8);
    let truth = normal_bundle(&mut r, 2, 2, 0.4);
    let data = excited_dataset(&truth, 12, 0.1, 8);
    let oracle = oracle_bundle_micro(&data, &truth, 0.0, 100, 2).unwrap();
    assert_eq!(oracle.penalty, 0.0);
    // Targets are generated by the truth, so the unrestricted fit is the truth itself.
    let blocks = RegressionData::from_dataset(&data).unwrap();
    for ((a, t), d) in oracle.bundle.iter().zip(truth.iter()).zip(&blocks) {
        let ls = ls_estimate_regression(&RegressionData::new(d.predictors().clone(), t * d.predictors()).unwrap())
            .unwrap()
            .a_matrix;
        assert!((a - &ls).amax() < 1e-12);
    }
    assert_eq!(oracle.support, SupportSet::full(2));
    assert!(oracle.fit_error < 1e-20);
}

#[test]
fn oracle_of_zero_truth_is_empty() {
    let zero = MatrixBundle::zeros(2, 2);
    let mut r = rng(9);
    let driver = normal_bundle(&mut r, 2, 2, 0.3);
    let data = excited_dataset(&driver, 12, 0.0, 9);
    let oracle = oracle_bundle_micro(&data, &zero, 1.0, 100, 2).unwrap();
    assert!(oracle.bundle.is_zero());
    assert!(oracle.support.is_empty());
    assert_eq!(oracle.fit_error + oracle.penalty, 0.0);
}

#[test]
fn oracle_refuses_large_state_dimension() {
    let mut r = rng(10);
    let truth = normal_bundle(&mut r, 4, 2, 0.2);
    let data = excited_dataset(&truth, 12, 0.1, 10);
    assert!(matches!(
        oracle_bundle_micro(&data, &truth, 1.0, 10, 0),
        Err(Error::ScaleGuard { n: 4, .. })
    ));
}

#[test]
fn oracle_inequality_on_a_micro_instance() {
    let mut r = rng(12);
    let truth = sparse_truth(&mut r, 2, 2, 0.6);
    let data = excited_dataset(&truth, 50, 0.05, 12);
    let lambda = bound_lambda(&data, 0.05, 3.0).unwrap();
    let (est, _) = solve(&data, &SolverConfig::new(RegularizerSpec::group_sparsity(lambda)), None).unwrap();
    let diag = theorem2_check(&data, &truth, &est, lambda, 3.0, 0.05, 2000, 4).unwrap();
    assert!(diag.holds, "lhs {} rhs {}", diag.lhs, diag.rhs);
}

#[test]
fn cross_validation_is_deterministic_and_handles_edges() {
    let mut r = rng(13);
    let truth = sparse_truth(&mut r, 4, 3, 0.3);
    let data = excited_dataset(&truth, 40, 0.1, 13);
    let cfg = SolverConfig::new(RegularizerSpec::group_sparsity(0.0));
    let a = cross_validate(&data, &cfg, None, 4).unwrap();
    let b = cross_validate(&data, &cfg, None, 4).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.grid.len(), 20);
    assert_eq!(a.best_lambda, a.grid[a.best_index]);

    let single = cross_validate(&data, &cfg, Some(&[0.3]), 4).unwrap();
    assert_eq!(single.best_lambda, 0.3);

    let scarce = excited_dataset(&truth, 5, 0.1, 13);
    assert!(matches!(cross_validate(&scarce, &cfg, None, 4), Err(Error::InvalidInput(_))));
    assert!(matches!(cross_validate(&data, &cfg, None, 1), Err(Error::InvalidInput(_))));
}

#[test]
fn noise_free_cross_validation_prefers_small_weights() {
    let mut r = rng(14);
    let truth = normal_bundle(&mut r, 3, 3, 0.25);
    let data = excited_dataset(&truth, 40, 0.0, 14);
    let blocks = RegressionData::from_dataset(&data).unwrap();
    let cfg = SolverConfig {
        rel_tolerance: 1e-14,
        max_iterations: 50_000,
        ..SolverConfig::new(RegularizerSpec::group_sparsity(0.0))
    };
    let res = cross_validate_regressions(&blocks, &cfg, None, 4).unwrap();
    let lmax = lambda_max_regressions(&blocks);
    assert!(res.best_lambda <= 1e-3 * lmax, "picked {} of lambda_max {lmax}", res.best_lambda);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn score_identity_holds_for_random_data(seed in any::<u64>(), n in 1usize..5, len in 2usize..30) {
        let mut r = rng(seed);
        let x = normal_matrix(&mut r, n, len);
        let y = normal_matrix(&mut r, n, len);
        let a = normal_matrix(&mut r, n, n);
        let test = RegressionData::new(x.clone(), y.clone()).unwrap();
        let got = prediction_error_score(&a, &test).unwrap();
        prop_assert!((got - one_minus_mean_r2(&a, &x, &y)).abs() <= 1e-10 * got.abs().max(1.0));
    }

    #[test]
    fn phi_homogeneity(seed in any::<u64>(), c in 0.1f64..10.0) {
        let mut r = rng(seed);
        let truth = normal_bundle(&mut r, 3, 2, 0.2);
        let data = excited_dataset(&truth, 8, 0.1, seed % 1000);
        let blocks = RegressionData::from_dataset(&data).unwrap();
        let scaled_blocks: Vec<RegressionData> = blocks
            .iter()
            .map(|d| RegressionData::new(d.predictors() * c, d.targets() * c).unwrap())
            .collect();
        let support = SupportSet::new(3, [(0, 0), (2, 1)]).unwrap();
        let base = estimate_phi_regressions(&blocks, &support, 50, seed).unwrap();
        let phi = estimate_phi_regressions(&scaled_blocks, &support, 50, seed).unwrap();
        prop_assert!((phi - c * c * base).abs() <= 1e-12 * phi);
    }
}
