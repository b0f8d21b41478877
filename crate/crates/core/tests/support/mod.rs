#![allow(dead_code)]

pub mod oracles;

use mtsysid::model::{seeded_rng, SeededRng};
use mtsysid::{LtiSystem, MatrixBundle, MultiSystemDataset, SystemRecord};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> SeededRng {
    seeded_rng(seed, 77)
}

pub fn normal_matrix(rng: &mut SeededRng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn normal_bundle(rng: &mut SeededRng, n: usize, count: usize, scale: f64) -> MatrixBundle {
    MatrixBundle::new((0..count).map(|_| normal_matrix(rng, n, n) * scale).collect()).unwrap()
}

/// Systems driven by i.i.d. Gaussian inputs through `B = I`, so every
/// regressor is well excited.
pub fn excited_dataset(truth: &MatrixBundle, len: usize, sigma: f64, seed: u64) -> MultiSystemDataset {
    let n = truth.dim();
    let mut r = rng(seed);
    let entries = truth
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let b = DMatrix::identity(n, n);
            let sys = LtiSystem::new(a.clone(), b.clone(), sigma).unwrap();
            let u = normal_matrix(&mut r, n, len);
            let x0 = DVector::from_column_slice(normal_matrix(&mut r, n, 1).as_slice());
            let trajectory = mtsysid::simulate(&sys, &x0, &u, seed * 1000 + i as u64).unwrap();
            SystemRecord { trajectory, b_matrix: b }
        })
        .collect();
    MultiSystemDataset::new(entries).unwrap()
}

/// Random matrices of Frobenius norm 0.7 sharing a sparsity mask.
pub fn sparse_truth(rng: &mut SeededRng, n: usize, count: usize, density: f64) -> MatrixBundle {
    let mask: Vec<bool> = (0..n * n).map(|_| rng.random::<f64>() < density).collect();
    let mats = (0..count)
        .map(|_| {
            let mut a = DMatrix::from_fn(n, n, |r, c| {
                let z: f64 = rng.sample(StandardNormal);
                if mask[c * n + r] { z } else { 0.0 }
            });
            // Frobenius scaling bounds the spectral radius without blowing up
            // nilpotent draws.
            let norm = a.norm();
            if norm > 0.0 {
                a *= 0.7 / norm;
            }
            a
        })
        .collect();
    MatrixBundle::new(mats).unwrap()
}
