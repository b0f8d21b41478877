//! Closed-form proximal maps for the similarity regularizers, and the
//! regularizer values themselves.
//!
//! Every map here solves `argmin_Y  w * R(Y) + 1/2 sum_i ||Y_i - Z_i||_F^2`
//! for one choice of `R`, where `w` is the step size times the weight.

use nalgebra::{DMatrix, DVector, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::MatrixBundle;

/// Which similarity prior is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegularizerKind {
    /// Sum over entry positions of the cross-system l2 norm.
    GroupSparsity,
    /// Sum of pairwise squared Frobenius distances.
    SmallHeterogeneity,
    /// Nuclear norm of `[vec(A_1), ..., vec(A_N)]`.
    NuclearNorm,
    /// `lambda1 * heterogeneity + lambda2 * group`.
    Composite,
}

impl RegularizerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::GroupSparsity => "group-sparsity",
            Self::SmallHeterogeneity => "small-heterogeneity",
            Self::NuclearNorm => "nuclear-norm",
            Self::Composite => "composite",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizerSpec {
    pub kind: RegularizerKind,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub lambda1: f64,
    #[serde(default)]
    pub lambda2: f64,
}

impl RegularizerSpec {
    pub fn group_sparsity(lambda: f64) -> Self {
        Self::single(RegularizerKind::GroupSparsity, lambda)
    }

    pub fn small_heterogeneity(lambda: f64) -> Self {
        Self::single(RegularizerKind::SmallHeterogeneity, lambda)
    }

    pub fn nuclear_norm(lambda: f64) -> Self {
        Self::single(RegularizerKind::NuclearNorm, lambda)
    }

    pub fn composite(lambda1: f64, lambda2: f64) -> Self {
        Self {
            kind: RegularizerKind::Composite,
            lambda: 0.0,
            lambda1,
            lambda2,
        }
    }

    fn single(kind: RegularizerKind, lambda: f64) -> Self {
        Self {
            kind,
            lambda,
            lambda1: 0.0,
            lambda2: 0.0,
        }
    }

    /// Same kind with the primary weight replaced (`lambda2` for composite).
    pub fn with_weight(&self, weight: f64) -> Self {
        let mut out = *self;
        match self.kind {
            RegularizerKind::Composite => out.lambda2 = weight,
            _ => out.lambda = weight,
        }
        out
    }

    pub fn primary_weight(&self) -> f64 {
        match self.kind {
            RegularizerKind::Composite => self.lambda2,
            _ => self.lambda,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |w: f64| w >= 0.0 && w.is_finite();
        if ok(self.lambda) && ok(self.lambda1) && ok(self.lambda2) {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "regularizer weights must be finite and nonnegative: {self:?}"
            )))
        }
    }
}

/// Cross-system vector of one entry position.
pub type GroupVector = DVector<f64>;

/// Scales `z` by `max(||z|| - t, 0) / ||z||`; zero when `||z|| <= t`.
pub fn group_soft_threshold(z: &GroupVector, threshold: f64) -> GroupVector {
    let norm = z.norm();
    if norm <= threshold || norm == 0.0 {
        return DVector::zeros(z.len());
    }
    if threshold == 0.0 {
        return z.clone();
    }
    z * ((norm - threshold) / norm)
}

pub fn prox_group_sparsity(bundle: &MatrixBundle, threshold: f64) -> MatrixBundle {
    let n = bundle.dim();
    let mut out = bundle.clone();
    for c in 0..n {
        for r in 0..n {
            out.set_group(r, c, &group_soft_threshold(&bundle.group(r, c), threshold));
        }
    }
    out
}

/// Entry-wise `y = (z + 2w s 1) / (2wN + 1)` with `s` the cross-system sum.
pub fn prox_small_heterogeneity(bundle: &MatrixBundle, weight: f64) -> MatrixBundle {
    if weight == 0.0 {
        return bundle.clone();
    }
    let count = bundle.len() as f64;
    let mut sum = DMatrix::zeros(bundle.dim(), bundle.dim());
    for m in bundle.iter() {
        sum += m;
    }
    let denom = 2.0 * weight * count + 1.0;
    let shift = sum * (2.0 * weight);
    let matrices = bundle.iter().map(|z| (z + &shift) / denom).collect();
    MatrixBundle::new(matrices).expect("shape preserved")
}

/// Singular value soft-thresholding of the stacked bundle.
pub fn prox_nuclear(bundle: &MatrixBundle, threshold: f64) -> MatrixBundle {
    if threshold == 0.0 {
        return bundle.clone();
    }
    let n = bundle.dim();
    let svd = SVD::new(bundle.stack(), true, true);
    let kept = svd.singular_values.iter().take_while(|&&s| s > threshold).count();
    if kept == 0 {
        return MatrixBundle::zeros(n, bundle.len());
    }
    let u = svd.u.as_ref().expect("U requested");
    let v_t = svd.v_t.as_ref().expect("V^T requested");
    let mut shrunk = DMatrix::zeros(n * n, bundle.len());
    for k in 0..kept {
        let s = svd.singular_values[k] - threshold;
        shrunk += u.column(k) * v_t.row(k) * s;
    }
    MatrixBundle::from_stacked(&shrunk, n).expect("shape preserved")
}

/// `sum_{jk} ||[(A_1)_{jk}, ..., (A_N)_{jk}]||_2`.
pub fn group_norm(bundle: &MatrixBundle) -> f64 {
    let n = bundle.dim();
    let mut total = 0.0;
    for c in 0..n {
        for r in 0..n {
            total += bundle.iter().map(|m| m[(r, c)] * m[(r, c)]).sum::<f64>().sqrt();
        }
    }
    total
}

/// `sum_{i<j} ||A_i - A_j||_F^2`.
pub fn heterogeneity(bundle: &MatrixBundle) -> f64 {
    let m = bundle.matrices();
    let mut total = 0.0;
    for i in 0..m.len() {
        for j in i + 1..m.len() {
            total += (&m[i] - &m[j]).norm_squared();
        }
    }
    total
}

pub fn nuclear_norm(bundle: &MatrixBundle) -> f64 {
    SVD::new(bundle.stack(), false, false).singular_values.sum()
}

/// `R(A_1, ..., A_N)` without the weight; for composite, the weighted sum
/// `lambda1 * heterogeneity + lambda2 * group`.
pub fn regularizer_value(bundle: &MatrixBundle, spec: &RegularizerSpec) -> f64 {
    match spec.kind {
        RegularizerKind::GroupSparsity => group_norm(bundle),
        RegularizerKind::SmallHeterogeneity => heterogeneity(bundle),
        RegularizerKind::NuclearNorm => nuclear_norm(bundle),
        RegularizerKind::Composite => {
            spec.lambda1 * heterogeneity(bundle) + spec.lambda2 * group_norm(bundle)
        }
    }
}

/// The regularizer's contribution to the objective, weight included.
pub fn weighted_regularizer(bundle: &MatrixBundle, spec: &RegularizerSpec) -> f64 {
    match spec.kind {
        RegularizerKind::Composite => regularizer_value(bundle, spec),
        _ if spec.lambda == 0.0 => 0.0,
        _ => spec.lambda * regularizer_value(bundle, spec),
    }
}
