//! Proximal gradient with backtracking line search over a bundle of `N`
//! state matrices.
//!
//! One iteration takes a gradient step on the summed least-squares loss,
//! applies the regularizer's proximal map, and shrinks the step by the
//! backtracking factor until the sufficient-decrease test passes. The
//! accepted step seeds the next iteration; it never grows. An optional
//! momentum variant searches from an extrapolated point and falls back to a
//! plain step whenever that would raise the objective.

use nalgebra::{DMatrix, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::estimators::RegressionData;
use crate::model::{MatrixBundle, MultiSystemDataset};
use crate::prox::{
    group_norm, heterogeneity, prox_group_sparsity, prox_nuclear, prox_small_heterogeneity, weighted_regularizer,
    RegularizerKind, RegularizerSpec,
};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum StepRule {
    /// Backtracking on the sufficient-decrease test.
    #[default]
    Backtracking,
    /// Plain proximal gradient with a fixed step and no line search.
    Fixed { step: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub initial_step: f64,
    pub backtrack_factor: f64,
    pub regularizer: RegularizerSpec,
    pub max_iterations: usize,
    pub rel_tolerance: f64,
    pub max_backtracks_per_iter: usize,
    pub step_rule: StepRule,
    /// Adds Nesterov momentum with function-value restart. Every accepted
    /// iterate still lowers the objective; off by default.
    pub accelerated: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            initial_step: 1.0,
            backtrack_factor: 0.5,
            regularizer: RegularizerSpec::group_sparsity(0.0),
            max_iterations: 10_000,
            rel_tolerance: 1e-9,
            max_backtracks_per_iter: 100,
            step_rule: StepRule::Backtracking,
            accelerated: false,
        }
    }
}

impl SolverConfig {
    pub fn new(regularizer: RegularizerSpec) -> Self {
        Self {
            regularizer,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            return bad(format!("initial step must be positive, got {}", self.initial_step));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return bad(format!("backtrack factor must lie in (0, 1), got {}", self.backtrack_factor));
        }
        if self.max_iterations == 0 || self.max_backtracks_per_iter == 0 {
            return bad("iteration limits must be positive".into());
        }
        if !(self.rel_tolerance > 0.0) {
            return bad(format!("relative tolerance must be positive, got {}", self.rel_tolerance));
        }
        if let StepRule::Fixed { step } = self.step_rule {
            if !(step > 0.0 && step.is_finite()) {
                return bad(format!("fixed step must be positive, got {step}"));
            }
        }
        self.regularizer.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    /// Accepted iterations.
    pub iterations: usize,
    /// Objective at the initial point followed by one value per iteration.
    pub objective_trace: Vec<f64>,
    pub final_step: f64,
    pub converged: bool,
    pub backtrack_counts: Vec<usize>,
}

/// Smooth part of the objective: summed LS losses plus, for the composite
/// prior, the weighted heterogeneity penalty.
struct SmoothPart<'a> {
    data: &'a [RegressionData],
    /// Per system, `(X X^T, Y X^T)` when that is cheaper than touching `X`,
    /// i.e. when there are more pairs than states.
    moments: Vec<Option<(DMatrix<f64>, DMatrix<f64>)>>,
    heterogeneity_weight: f64,
}

impl<'a> SmoothPart<'a> {
    fn new(data: &'a [RegressionData], heterogeneity_weight: f64) -> Self {
        let moments = data
            .iter()
            .map(|d| {
                (d.len() > d.state_dim()).then(|| {
                    let xt = d.predictors().transpose();
                    (d.predictors() * &xt, d.targets() * &xt)
                })
            })
            .collect();
        Self {
            data,
            moments,
            heterogeneity_weight,
        }
    }

    fn value(&self, bundle: &MatrixBundle) -> f64 {
        let loss: f64 = self.data.iter().zip(bundle.iter()).map(|(d, a)| d.residual(a).norm_squared()).sum();
        let w = self.heterogeneity_weight;
        if w > 0.0 {
            loss + w * heterogeneity(bundle)
        } else {
            loss
        }
    }

    fn gradient(&self, bundle: &MatrixBundle) -> Vec<DMatrix<f64>> {
        let mut grads: Vec<DMatrix<f64>> = self
            .data
            .iter()
            .zip(&self.moments)
            .zip(bundle.iter())
            .map(|((d, m), a)| match m {
                Some((gram, cross)) => (a * gram - cross) * 2.0,
                None => d.residual(a) * d.predictors().transpose() * -2.0,
            })
            .collect();
        let w = self.heterogeneity_weight;
        if w > 0.0 {
            let sum: DMatrix<f64> = bundle.iter().sum();
            let count = bundle.len() as f64;
            for (g, a) in grads.iter_mut().zip(bundle.iter()) {
                *g += (a * count - &sum) * (2.0 * w);
            }
        }
        grads
    }

    fn value_and_gradient(&self, bundle: &MatrixBundle) -> (f64, Vec<DMatrix<f64>>) {
        (self.value(bundle), self.gradient(bundle))
    }

    /// `f(A + D) - f(A) - <grad f(A), D>`, exact since `f` is quadratic.
    fn remainder(&self, direction: &MatrixBundle) -> f64 {
        let mut total: f64 = self
            .data
            .iter()
            .zip(&self.moments)
            .zip(direction.iter())
            .map(|((d, m), dir)| match m {
                Some((gram, _)) => (dir * gram).dot(dir),
                None => d.curvature(dir),
            })
            .sum();
        if self.heterogeneity_weight > 0.0 {
            total += self.heterogeneity_weight * heterogeneity(direction);
        }
        total
    }
}

fn prox_step(spec: &RegularizerSpec, z: &MatrixBundle, step: f64) -> MatrixBundle {
    match spec.kind {
        RegularizerKind::GroupSparsity => prox_group_sparsity(z, step * spec.lambda),
        RegularizerKind::SmallHeterogeneity => prox_small_heterogeneity(z, step * spec.lambda),
        RegularizerKind::NuclearNorm => prox_nuclear(z, step * spec.lambda),
        RegularizerKind::Composite => prox_group_sparsity(z, step * spec.lambda2),
    }
}

/// The part of the objective handled by [`prox_step`].
fn proximal_value(spec: &RegularizerSpec, bundle: &MatrixBundle) -> f64 {
    match spec.kind {
        RegularizerKind::Composite if spec.lambda2 == 0.0 => 0.0,
        RegularizerKind::Composite => spec.lambda2 * group_norm(bundle),
        _ => weighted_regularizer(bundle, spec),
    }
}

fn check_shapes(data: &[RegressionData], bundle: &MatrixBundle) -> Result<()> {
    if data.is_empty() {
        return Err(Error::InvalidInput("no systems to identify".into()));
    }
    let n = data[0].state_dim();
    if let Some(i) = data.iter().position(|d| d.state_dim() != n) {
        return Err(dim_err(format!("system {i} has state dimension {}, expected {n}", data[i].state_dim())));
    }
    if bundle.len() != data.len() || bundle.dim() != n {
        return Err(dim_err(format!(
            "bundle holds {} matrices of size {}, data needs {} of size {n}",
            bundle.len(),
            bundle.dim(),
            data.len()
        )));
    }
    Ok(())
}

/// Minimizes `sum_i L_i(A_i) + lambda R(A_1, ..., A_N)` over the systems of
/// `dataset`. Starts from the zero bundle unless `initial` is given.
pub fn solve(
    dataset: &MultiSystemDataset,
    config: &SolverConfig,
    initial: Option<&MatrixBundle>,
) -> Result<(MatrixBundle, SolveReport)> {
    let data = RegressionData::from_dataset(dataset)?;
    solve_regressions(&data, config, initial)
}

/// [`solve`] on pre-built regression blocks, e.g. a cross-validation fold.
pub fn solve_regressions(
    data: &[RegressionData],
    config: &SolverConfig,
    initial: Option<&MatrixBundle>,
) -> Result<(MatrixBundle, SolveReport)> {
    config.validate()?;
    let n = data.first().map(|d| d.state_dim()).unwrap_or(0);
    let mut current = match initial {
        Some(b) => b.clone(),
        None => MatrixBundle::zeros(n.max(1), data.len().max(1)),
    };
    check_shapes(data, &current)?;

    let spec = &config.regularizer;
    let smooth = SmoothPart::new(
        data,
        if spec.kind == RegularizerKind::Composite { spec.lambda1 } else { 0.0 },
    );

    let finite = |v: f64, g: &[DMatrix<f64>]| v.is_finite() && g.iter().all(|m| m.iter().all(|x| x.is_finite()));
    let (value, mut grads) = smooth.value_and_gradient(&current);
    let mut objective = value + proximal_value(spec, &current);
    if !finite(objective, &grads) {
        return Err(Error::Numerical { iteration: 0 });
    }

    let mut trace = vec![objective];
    let mut backtrack_counts = Vec::new();
    let mut step = match config.step_rule {
        StepRule::Backtracking => config.initial_step,
        StepRule::Fixed { step } => step,
    };
    let mut converged = false;
    let mut iterations = 0;
    // Extrapolated search point and its smooth gradient (accelerated mode only).
    let mut search: Option<(MatrixBundle, Vec<DMatrix<f64>>)> = None;
    let mut momentum: f64 = 1.0;

    while iterations < config.max_iterations {
        let (base, base_grads) = match &search {
            Some((point, g)) => (point, g),
            None => (&current, &grads),
        };
        let mut alpha = step;
        let mut backtracks = 0;
        let next = loop {
            let z = MatrixBundle::new(base.iter().zip(base_grads).map(|(a, g)| a - g * alpha).collect())?;
            let y = prox_step(spec, &z, alpha);
            if matches!(config.step_rule, StepRule::Fixed { .. }) {
                break y;
            }
            let direction = MatrixBundle::new(y.iter().zip(base.iter()).map(|(y, a)| y - a).collect())?;
            let quad = direction.frobenius_norm().powi(2) / (2.0 * alpha);
            let rem = smooth.remainder(&direction);
            if !rem.is_finite() {
                return Err(Error::Numerical { iteration: iterations + 1 });
            }
            if rem <= quad {
                break y;
            }
            backtracks += 1;
            if backtracks > config.max_backtracks_per_iter {
                return Err(Error::StepCollapse {
                    iteration: iterations + 1,
                    backtracks,
                    step: alpha,
                });
            }
            alpha *= config.backtrack_factor;
        };
        step = alpha;
        iterations += 1;
        backtrack_counts.push(backtracks);

        let (next_value, next_grads) = smooth.value_and_gradient(&next);
        let next_objective = next_value + proximal_value(spec, &next);
        if !finite(next_objective, &next_grads) {
            return Err(Error::Numerical { iteration: iterations });
        }
        let extrapolated = search.is_some();
        if extrapolated && next_objective > objective {
            // Momentum overshot: keep the current point and restart from a plain step.
            search = None;
            momentum = 1.0;
            trace.push(objective);
            continue;
        }
        if next_objective > objective && config.step_rule == StepRule::Backtracking {
            // Sufficient decrease held, so only rounding can raise the value: a fixed point.
            trace.push(objective);
            converged = true;
            break;
        }
        let previous = std::mem::replace(&mut current, next);
        grads = next_grads;
        trace.push(next_objective);
        let decrease = (objective - next_objective) / objective.abs().max(f64::MIN_POSITIVE);
        objective = next_objective;
        if decrease < config.rel_tolerance {
            converged = true;
            break;
        }
        if config.accelerated {
            let next_momentum = (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt()) / 2.0;
            let beta = (momentum - 1.0) / next_momentum;
            momentum = next_momentum;
            let point = MatrixBundle::new(
                current.iter().zip(previous.iter()).map(|(c, p)| c + (c - p) * beta).collect(),
            )?;
            let point_grads = smooth.gradient(&point);
            search = Some((point, point_grads));
        }
    }
    Ok((
        current,
        SolveReport {
            iterations,
            objective_trace: trace,
            final_step: step,
            converged,
            backtrack_counts,
        },
    ))
}

/// `sum_i L_i(A_i) + lambda R(A_1, ..., A_N)` (the composite prior carries its own weights).
pub fn objective(dataset: &MultiSystemDataset, bundle: &MatrixBundle, spec: &RegularizerSpec) -> Result<f64> {
    let data = RegressionData::from_dataset(dataset)?;
    objective_regressions(&data, bundle, spec)
}

pub fn objective_regressions(data: &[RegressionData], bundle: &MatrixBundle, spec: &RegularizerSpec) -> Result<f64> {
    check_shapes(data, bundle)?;
    let loss: f64 = data
        .iter()
        .zip(bundle.iter())
        .map(|(d, a)| d.residual(a).norm_squared())
        .sum();
    Ok(loss + weighted_regularizer(bundle, spec))
}

fn gradients_at_zero(data: &[RegressionData]) -> Vec<DMatrix<f64>> {
    data.iter()
        .map(|d| d.targets() * d.predictors().transpose() * -2.0)
        .collect()
}

/// Smallest group-sparsity weight at which the zero bundle is optimal:
/// the largest cross-system norm of the gradient at zero.
pub fn lambda_max(dataset: &MultiSystemDataset) -> Result<f64> {
    Ok(lambda_max_regressions(&RegressionData::from_dataset(dataset)?))
}

pub fn lambda_max_regressions(data: &[RegressionData]) -> f64 {
    let grads = gradients_at_zero(data);
    let n = data[0].state_dim();
    let mut worst: f64 = 0.0;
    for c in 0..n {
        for r in 0..n {
            let norm = grads.iter().map(|g| g[(r, c)] * g[(r, c)]).sum::<f64>().sqrt();
            worst = worst.max(norm);
        }
    }
    worst
}

/// Nuclear-norm analogue of [`lambda_max`]: the spectral norm of the stacked
/// gradient at zero.
pub fn nuclear_lambda_max_regressions(data: &[RegressionData]) -> f64 {
    let grads = MatrixBundle::new(gradients_at_zero(data)).expect("uniform shapes");
    SVD::new(grads.stack(), false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}
