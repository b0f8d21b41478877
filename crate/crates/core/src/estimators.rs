//! Per-system least-squares fit: loss, gradient, the minimum-norm LS
//! estimate, and the Kronecker-vectorized form of the same problem.

use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{dim_err, Error, Result};
use crate::model::{MultiSystemDataset, Trajectory};

/// Transition pairs in regression form: column `t` of `targets` is
/// `x(t+1) - B u(t)` and column `t` of `predictors` is `x(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionData {
    predictors: DMatrix<f64>,
    targets: DMatrix<f64>,
}

impl RegressionData {
    pub fn new(predictors: DMatrix<f64>, targets: DMatrix<f64>) -> Result<Self> {
        if predictors.shape() != targets.shape() {
            return Err(dim_err(format!(
                "predictors {:?} and targets {:?} differ in shape",
                predictors.shape(),
                targets.shape()
            )));
        }
        Ok(Self {
            predictors,
            targets,
        })
    }

    pub fn from_trajectory(trajectory: &Trajectory, b_matrix: &DMatrix<f64>) -> Result<Self> {
        let n = trajectory.state_dim();
        if b_matrix.shape() != (n, trajectory.input_dim()) {
            return Err(dim_err(format!(
                "input matrix is {:?}, trajectory needs ({n}, {})",
                b_matrix.shape(),
                trajectory.input_dim()
            )));
        }
        let p = trajectory.len();
        let states = trajectory.states();
        let predictors = states.columns(0, p).into_owned();
        let targets = states.columns(1, p) - b_matrix * trajectory.inputs();
        Ok(Self {
            predictors,
            targets,
        })
    }

    /// One regression block per system of `dataset`.
    pub fn from_dataset(dataset: &MultiSystemDataset) -> Result<Vec<Self>> {
        dataset
            .entries()
            .iter()
            .map(|e| Self::from_trajectory(&e.trajectory, &e.b_matrix))
            .collect()
    }

    pub fn predictors(&self) -> &DMatrix<f64> {
        &self.predictors
    }

    pub fn targets(&self) -> &DMatrix<f64> {
        &self.targets
    }

    pub fn state_dim(&self) -> usize {
        self.predictors.nrows()
    }

    pub fn len(&self) -> usize {
        self.predictors.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Keeps only the pairs at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            predictors: self.predictors.select_columns(indices),
            targets: self.targets.select_columns(indices),
        }
    }

    fn check(&self, a: &DMatrix<f64>) -> Result<()> {
        let n = self.state_dim();
        if a.shape() != (n, n) {
            return Err(dim_err(format!("state matrix is {:?}, expected ({n}, {n})", a.shape())));
        }
        Ok(())
    }

    pub fn residual(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        &self.targets - a * &self.predictors
    }

    /// `sum_t ||y(t) - A x(t)||^2`.
    pub fn loss(&self, a: &DMatrix<f64>) -> Result<f64> {
        self.check(a)?;
        Ok(self.residual(a).norm_squared())
    }

    /// `-2 sum_t r(t) x(t)^T`.
    pub fn gradient(&self, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check(a)?;
        Ok(self.residual(a) * self.predictors.transpose() * -2.0)
    }

    /// `sum_t ||D x(t)||^2`, the exact second-order remainder of the loss along `D`.
    pub fn curvature(&self, direction: &DMatrix<f64>) -> f64 {
        (direction * &self.predictors).norm_squared()
    }
}

/// Sum of squared one-step residuals of `a_matrix` along `trajectory`.
pub fn ls_loss(a_matrix: &DMatrix<f64>, trajectory: &Trajectory, b_matrix: &DMatrix<f64>) -> Result<f64> {
    RegressionData::from_trajectory(trajectory, b_matrix)?.loss(a_matrix)
}

/// Gradient of [`ls_loss`] with respect to the state matrix.
pub fn ls_gradient(
    a_matrix: &DMatrix<f64>,
    trajectory: &Trajectory,
    b_matrix: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    RegressionData::from_trajectory(trajectory, b_matrix)?.gradient(a_matrix)
}

/// Conditioning of the regressor Gram matrix `X X^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    /// Eigenvalues of the Gram matrix, descending.
    pub gram_spectrum: Vec<f64>,
    pub tolerance: f64,
    pub rank: usize,
    pub ill_conditioned: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsEstimate {
    pub a_matrix: DMatrix<f64>,
    pub rank: usize,
    pub report: ConditionReport,
}

/// Minimum-norm least-squares state matrix for one system.
pub fn ls_estimate(trajectory: &Trajectory, b_matrix: &DMatrix<f64>) -> Result<LsEstimate> {
    let data = RegressionData::from_trajectory(trajectory, b_matrix)?;
    ls_estimate_regression(&data)
}

pub fn ls_estimate_regression(data: &RegressionData) -> Result<LsEstimate> {
    let n = data.state_dim();
    if data.is_empty() {
        return Err(Error::InvalidInput("least squares needs at least one transition pair".into()));
    }
    // X = U S V^T, so the Gram matrix X X^T has eigenvalues S^2 and the
    // minimum-norm solution of A X = Y is Y V S^+ U^T.
    let svd = SVD::new(data.predictors().clone(), true, true);
    let u = svd.u.as_ref().expect("U requested");
    let v_t = svd.v_t.as_ref().expect("V^T requested");
    let mut gram_spectrum: Vec<f64> = svd.singular_values.iter().map(|s| s * s).collect();
    gram_spectrum.resize(n, 0.0);
    let tolerance = gram_spectrum[0] * n as f64 * f64::EPSILON;
    let rank = gram_spectrum.iter().filter(|&&g| g > tolerance).count();

    let mut a = DMatrix::zeros(n, n);
    for k in 0..rank {
        let s = svd.singular_values[k];
        let yv = data.targets() * v_t.row(k).transpose();
        a += (yv / s) * u.column(k).transpose();
    }
    Ok(LsEstimate {
        a_matrix: a,
        rank,
        report: ConditionReport {
            gram_spectrum,
            tolerance,
            rank,
            ill_conditioned: rank < n,
        },
    })
}

/// Stacked targets `vec([x(2) - B u(1), ..., x(P+1) - B u(P)])` and the
/// regressor `X^T (x) I_n`, so that the loss equals `||y - X vec(A)||^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorizedLs {
    pub y_tilde: DVector<f64>,
    pub x_tilde: DMatrix<f64>,
}

impl VectorizedLs {
    pub fn loss(&self, a_matrix: &DMatrix<f64>) -> f64 {
        let a = DVector::from_column_slice(a_matrix.as_slice());
        (&self.y_tilde - &self.x_tilde * a).norm_squared()
    }
}

pub fn vectorize(trajectory: &Trajectory, b_matrix: &DMatrix<f64>) -> Result<VectorizedLs> {
    let data = RegressionData::from_trajectory(trajectory, b_matrix)?;
    if data.is_empty() {
        return Err(Error::InvalidInput("vectorization needs at least one transition pair".into()));
    }
    Ok(vectorize_regression(&data))
}

pub fn vectorize_regression(data: &RegressionData) -> VectorizedLs {
    let n = data.state_dim();
    VectorizedLs {
        y_tilde: DVector::from_column_slice(data.targets().as_slice()),
        x_tilde: data.predictors().transpose().kronecker(&DMatrix::<f64>::identity(n, n)),
    }
}
