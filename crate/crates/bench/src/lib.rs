//! Fixtures shared by the benchmarks.

use mtsysid::{generate_family, simulate_family, FamilyKind, InputSignal, MatrixBundle, RegressionData, SimilarFamilySpec};
use nalgebra::DMatrix;

/// Regression blocks of a common-sparsity family driven by Gaussian inputs.
pub fn sparse_blocks(state_dim: usize, systems: usize, pairs: usize, seed: u64) -> Vec<RegressionData> {
    let spec = SimilarFamilySpec {
        kind: FamilyKind::CommonSparsity { density: 0.3 },
        state_dim,
        input_dim: state_dim,
        systems,
        spectral_radius_cap: 0.9,
        noise_std: 0.1,
        seed,
    };
    let family = generate_family(&spec).expect("fixture density yields a support");
    let data = simulate_family(&family, &vec![pairs; systems], InputSignal::Gaussian, seed).expect("valid fixture");
    RegressionData::from_dataset(&data).expect("consistent fixture")
}

/// Deterministic dense bundle with entries in (-1, 1).
pub fn dense_bundle(dim: usize, count: usize) -> MatrixBundle {
    let mats = (0..count)
        .map(|k| DMatrix::from_fn(dim, dim, |r, c| ((r * 31 + c * 17 + k * 7) as f64 * 0.618).sin()))
        .collect();
    MatrixBundle::new(mats).expect("equal shapes")
}
