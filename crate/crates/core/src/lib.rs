//! Joint identification of `N` structurally similar discrete-time LTI systems.
//!
//! Each system `x_i(t+1) = A_i x_i(t) + B_i u_i(t) + w_i(t)` has a known input
//! matrix `B_i`. The state matrices are estimated together by minimizing
//!
//! ```text
//! sum_i sum_t ||x_i(t+1) - A_i x_i(t) - B_i u_i(t)||^2 + lambda R(A_1, ..., A_N)
//! ```
//!
//! where `R` encodes a shared structure: a common sparsity pattern
//! ([`RegularizerKind::GroupSparsity`]), small pairwise differences
//! ([`RegularizerKind::SmallHeterogeneity`]), a low-rank stack
//! ([`RegularizerKind::NuclearNorm`]), or sparsity plus small differences
//! ([`RegularizerKind::Composite`]). The problem is solved by proximal
//! gradient with backtracking ([`solve`]).
//!
//! ```
//! use mtsysid::{generate_family, simulate_family, solve, FamilyKind, InputSignal,
//!               RegularizerSpec, SimilarFamilySpec, SolverConfig, lambda_max};
//!
//! let family = generate_family(&SimilarFamilySpec {
//!     kind: FamilyKind::CommonSparsity { density: 0.3 },
//!     state_dim: 4, input_dim: 2, systems: 3,
//!     spectral_radius_cap: 0.9, noise_std: 0.05, seed: 1,
//! }).unwrap();
//! let data = simulate_family(&family, &[40, 40, 10], InputSignal::Gaussian, 7).unwrap();
//! let lambda = 0.1 * lambda_max(&data).unwrap();
//! let (estimate, report) =
//!     solve(&data, &SolverConfig::new(RegularizerSpec::group_sparsity(lambda)), None).unwrap();
//! assert_eq!(estimate.len(), 3);
//! assert!(report.converged);
//! ```

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod estimators;
pub mod model;
pub mod prox;
pub mod solver;

pub use analysis::{
    bound_lambda, cross_validate, estimate_phi, frobenius_errors, lambda0_value, oracle_bundle_micro,
    prediction_error_score, theorem1_check, theorem2_check, BoundDiagnostics, CvResult, OracleDiagnostics,
    OracleSolution, SupportSet,
};
pub use error::{Error, Result};
pub use estimators::{ls_estimate, ls_gradient, ls_loss, vectorize, LsEstimate, RegressionData, VectorizedLs};
pub use model::{
    generate_family, simulate, simulate_family, FamilyKind, GeneratedFamily, InputSignal, LtiSystem, MatrixBundle,
    MultiSystemDataset, SimilarFamilySpec, SystemRecord, Trajectory,
};
pub use prox::{
    group_soft_threshold, prox_group_sparsity, prox_nuclear, prox_small_heterogeneity, regularizer_value,
    RegularizerKind, RegularizerSpec,
};
pub use solver::{lambda_max, objective, solve, SolveReport, SolverConfig, StepRule};
