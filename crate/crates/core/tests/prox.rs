mod support;

use mtsysid::prox::{prox_group_sparsity, prox_nuclear, prox_small_heterogeneity};
use mtsysid::{group_soft_threshold, MatrixBundle};
use nalgebra::DVector;
use proptest::prelude::*;
use support::oracles::*;
use support::{normal_bundle, rng};

fn apply(kind: &str, z: &MatrixBundle, w: f64) -> MatrixBundle {
    match kind {
        "group" => prox_group_sparsity(z, w),
        "heterogeneity" => prox_small_heterogeneity(z, w),
        "nuclear" => prox_nuclear(z, w),
        _ => unreachable!(),
    }
}

fn oracle(kind: &str, z: &MatrixBundle, w: f64) -> MatrixBundle {
    match kind {
        "group" => numeric_prox_group(z, w),
        "heterogeneity" => numeric_prox_heterogeneity(z, w),
        "nuclear" => numeric_prox_nuclear(z, w),
        _ => unreachable!(),
    }
}

const KINDS: [&str; 3] = ["group", "heterogeneity", "nuclear"];

#[test]
fn soft_threshold_matches_grid_minimization() {
    // Minimize t||y|| + 1/2 ||y - z||^2 over a polar grid around z = (3, 4), t = 1.
    let z = DVector::from_vec(vec![3.0, 4.0]);
    let t = 1.0;
    let f = |y0: f64, y1: f64| t * (y0 * y0 + y1 * y1).sqrt() + 0.5 * ((y0 - 3.0).powi(2) + (y1 - 4.0).powi(2));
    let mut best = (f64::INFINITY, 0.0, 0.0);
    let steps = 2000;
    for i in 0..=steps {
        for j in 0..=steps {
            let y0 = 1.5 + 1.5 * i as f64 / steps as f64;
            let y1 = 2.5 + 1.5 * j as f64 / steps as f64;
            let v = f(y0, y1);
            if v < best.0 {
                best = (v, y0, y1);
            }
        }
    }
    let y = group_soft_threshold(&z, t);
    assert!((y[0] - best.1).abs() < 1e-3 && (y[1] - best.2).abs() < 1e-3);
    assert!((y[0] - 2.4).abs() < 1e-15 && (y[1] - 3.2).abs() < 1e-15);
}

#[test]
fn prox_maps_match_numeric_minimizers() {
    for seed in 0..20u64 {
        let mut r = rng(seed);
        let n = 2 + (seed as usize % 3);
        let count = 1 + (seed as usize % 4);
        let z = normal_bundle(&mut r, n, count, 1.0);
        for kind in KINDS {
            let w = 0.7;
            let closed = apply(kind, &z, w);
            let numeric = oracle(kind, &z, w);
            let gap = closed.distance(&numeric);
            assert!(gap < 1e-6, "{kind} seed {seed}: distance {gap:e}");
            let (fc, fn_) = (prox_objective(kind, &closed, &z, w), prox_objective(kind, &numeric, &z, w));
            assert!(fc <= fn_ + 1e-10, "{kind} seed {seed}: {fc} > {fn_}");
        }
    }
}

#[test]
fn random_six_by_three_nuclear_cases() {
    // n^2 = 4 would give 4x3; use n = 2 bundles padded to N = 3 and a 9x3 stack (n = 3).
    for seed in 100..110u64 {
        let mut r = rng(seed);
        let z = normal_bundle(&mut r, 3, 3, 1.0);
        let t = 1.5;
        assert!(prox_nuclear(&z, t).distance(&numeric_prox_nuclear(&z, t)) < 1e-6);
    }
}

#[test]
fn heterogeneity_prox_matches_oracle_at_reference_weight() {
    let mut r = rng(4);
    let z = normal_bundle(&mut r, 3, 4, 1.0);
    let y = prox_small_heterogeneity(&z, 0.7);
    assert!(y.distance(&numeric_prox_heterogeneity(&z, 0.7)) < 1e-12);
}

#[test]
fn full_shrinkage_zeroes_nuclear_prox() {
    let mut r = rng(8);
    let z = normal_bundle(&mut r, 3, 4, 1.0);
    let top = z.stack().svd(false, false).singular_values.max();
    assert!(prox_nuclear(&z, top).is_zero());
    assert!(prox_nuclear(&z, 2.0 * top).is_zero());
}

fn bundle_strategy() -> impl Strategy<Value = (u64, usize, usize, f64)> {
    (any::<u64>(), 1usize..=4, 1usize..=4, 0.0f64..3.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn prox_maps_are_nonexpansive((seed, n, count, w) in bundle_strategy()) {
        let mut r = rng(seed);
        let z1 = normal_bundle(&mut r, n, count, 1.5);
        let z2 = normal_bundle(&mut r, n, count, 1.5);
        for kind in KINDS {
            let d_out = apply(kind, &z1, w).distance(&apply(kind, &z2, w));
            prop_assert!(d_out <= z1.distance(&z2) * (1.0 + 1e-12) + 1e-12, "{}", kind);
        }
    }

    #[test]
    fn prox_output_beats_random_perturbations((seed, n, count, w) in bundle_strategy()) {
        let mut r = rng(seed);
        let z = normal_bundle(&mut r, n, count, 1.0);
        for kind in KINDS {
            let y = apply(kind, &z, w);
            let fy = prox_objective(kind, &y, &z, w);
            for k in 0..1000 {
                let scale = 10f64.powi(-(k % 6));
                let d = normal_bundle(&mut r, n, count, scale);
                let perturbed = MatrixBundle::new(y.iter().zip(d.iter()).map(|(a, b)| a + b).collect()).unwrap();
                prop_assert!(fy <= prox_objective(kind, &perturbed, &z, w) + 1e-12, "{}", kind);
            }
        }
    }

    #[test]
    fn group_prox_zero_iff_small((seed, n, count, t) in bundle_strategy()) {
        let mut r = rng(seed);
        let z = normal_bundle(&mut r, n, count, 1.0);
        let y = prox_group_sparsity(&z, t);
        for row in 0..n {
            for col in 0..n {
                let is_zero = y.group(row, col).iter().all(|v| *v == 0.0);
                prop_assert_eq!(is_zero, z.group(row, col).norm() <= t);
            }
        }
    }

    #[test]
    fn heterogeneity_prox_preserves_entry_sums((seed, n, count, w) in bundle_strategy()) {
        let mut r = rng(seed);
        let z = normal_bundle(&mut r, n, count, 1.0);
        let y = prox_small_heterogeneity(&z, w);
        for row in 0..n {
            for col in 0..n {
                let before = z.group(row, col).sum();
                let after = y.group(row, col).sum();
                prop_assert!((before - after).abs() <= 1e-12 * (1.0 + before.abs()));
            }
        }
    }

    #[test]
    fn nuclear_prox_never_raises_rank((seed, n, count, t) in bundle_strategy()) {
        let mut r = rng(seed);
        // Build a low-rank stack half the time.
        let base = normal_bundle(&mut r, n, count, 1.0);
        let z = if seed % 2 == 0 {
            let first = base.matrices()[0].clone();
            MatrixBundle::new((0..count).map(|i| &first * (i as f64 + 1.0)).collect()).unwrap()
        } else {
            base
        };
        let y = prox_nuclear(&z, t);
        prop_assert!(numerical_rank(&y.stack()) <= numerical_rank(&z.stack()));
    }
}
