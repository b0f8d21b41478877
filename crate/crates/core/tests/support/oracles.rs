//! Reference computations used only by tests. None of these call into the
//! closed-form operators they are compared against.

#![allow(dead_code)]

use mtsysid::{MatrixBundle, RegressionData, Trajectory};
use nalgebra::{DMatrix, DVector};

/// `w R(Y) + 1/2 sum_i ||Y_i - Z_i||^2` with `R` evaluated by plain loops.
pub fn prox_objective(kind: &str, y: &MatrixBundle, z: &MatrixBundle, weight: f64) -> f64 {
    let fit: f64 = y
        .iter()
        .zip(z.iter())
        .map(|(a, b)| a.iter().zip(b.iter()).map(|(p, q)| (p - q) * (p - q)).sum::<f64>())
        .sum::<f64>()
        * 0.5;
    let reg = match kind {
        "group" => loop_group_norm(y),
        "heterogeneity" => loop_heterogeneity(y),
        "nuclear" => eigen_nuclear_norm(y),
        other => panic!("unknown kind {other}"),
    };
    weight * reg + fit
}

pub fn loop_group_norm(b: &MatrixBundle) -> f64 {
    let n = b.dim();
    let mut total = 0.0;
    for r in 0..n {
        for c in 0..n {
            let mut s = 0.0;
            for m in b.iter() {
                s += m[(r, c)] * m[(r, c)];
            }
            total += s.sqrt();
        }
    }
    total
}

pub fn loop_heterogeneity(b: &MatrixBundle) -> f64 {
    let m = b.matrices();
    let mut total = 0.0;
    for i in 0..m.len() {
        for j in i + 1..m.len() {
            for (p, q) in m[i].iter().zip(m[j].iter()) {
                total += (p - q) * (p - q);
            }
        }
    }
    total
}

/// Nuclear norm as the sum of positive eigenvalues of `[[0, S], [S^T, 0]]`,
/// whose spectrum is `±sigma_k` padded with zeros.
pub fn eigen_nuclear_norm(b: &MatrixBundle) -> f64 {
    let s = b.stack();
    let (m, k) = s.shape();
    let mut aug = DMatrix::zeros(m + k, m + k);
    aug.view_mut((0, m), (m, k)).copy_from(&s);
    aug.view_mut((m, 0), (k, m)).copy_from(&s.transpose());
    aug.symmetric_eigenvalues().iter().filter(|e| **e > 0.0).sum()
}

/// Group prox by the variational identity `||v|| = min_eta ||v||^2/(2 eta) + eta/2`,
/// alternating closed-form updates of `y` and `eta` per group.
pub fn numeric_prox_group(z: &MatrixBundle, t: f64) -> MatrixBundle {
    let n = z.dim();
    let mut out = z.clone();
    for r in 0..n {
        for c in 0..n {
            let zg: Vec<f64> = z.iter().map(|m| m[(r, c)]).collect();
            let zn = zg.iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut eta = zn;
            for _ in 0..2_000_000 {
                if eta == 0.0 {
                    break;
                }
                let next = zn * eta / (eta + t);
                let done = (next - eta).abs() <= 1e-16 * zn.max(1e-300);
                eta = next;
                if done || eta < 1e-300 {
                    break;
                }
            }
            let factor = if eta + t > 0.0 { eta / (eta + t) } else { 0.0 };
            let y = DVector::from_iterator(zg.len(), zg.iter().map(|v| v * factor));
            out.set_group(r, c, &y);
        }
    }
    out
}

/// Heterogeneity prox from the stationarity system
/// `(I + 2w (N I - 1 1^T)) y = z`, solved densely per entry.
pub fn numeric_prox_heterogeneity(z: &MatrixBundle, w: f64) -> MatrixBundle {
    let count = z.len();
    let n = z.dim();
    let system = DMatrix::from_fn(count, count, |i, j| {
        let base = if i == j { 1.0 + 2.0 * w * count as f64 } else { 0.0 };
        base - 2.0 * w
    });
    let lu = system.lu();
    let mut out = z.clone();
    for r in 0..n {
        for c in 0..n {
            let y = lu.solve(&z.group(r, c)).expect("positive definite");
            out.set_group(r, c, &y);
        }
    }
    out
}

/// Nuclear prox by alternating ridge regressions on the factorized form
/// `min_{U, V} 1/2 ||U V^T - Z||^2 + t/2 (||U||^2 + ||V||^2)`.
pub fn numeric_prox_nuclear(z: &MatrixBundle, t: f64) -> MatrixBundle {
    let target = z.stack();
    let k = target.ncols();
    let mut u = target.clone();
    let mut v = DMatrix::<f64>::identity(k, k);
    let eye = DMatrix::<f64>::identity(k, k);
    let mut prev = &u * v.transpose();
    for _ in 0..200_000 {
        let vv = v.transpose() * &v + &eye * t;
        u = &target * &v * vv.try_inverse().expect("regularized");
        let uu = u.transpose() * &u + &eye * t;
        v = target.transpose() * &u * uu.try_inverse().expect("regularized");
        let current = &u * v.transpose();
        let change = (&current - &prev).norm();
        prev = current;
        if change < 1e-15 * target.norm().max(1e-300) {
            break;
        }
    }
    MatrixBundle::from_stacked(&prev, z.dim()).unwrap()
}

/// Central finite differences of `f` at `a` with step `h`.
pub fn finite_difference_gradient(f: impl Fn(&DMatrix<f64>) -> f64, a: &DMatrix<f64>, h: f64) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(a.nrows(), a.ncols());
    for r in 0..a.nrows() {
        for c in 0..a.ncols() {
            let mut plus = a.clone();
            plus[(r, c)] += h;
            let mut minus = a.clone();
            minus[(r, c)] -= h;
            g[(r, c)] = (f(&plus) - f(&minus)) / (2.0 * h);
        }
    }
    g
}

/// Loss by explicit scalar loops over the trajectory.
pub fn loop_loss(a: &DMatrix<f64>, traj: &Trajectory, b: &DMatrix<f64>) -> f64 {
    let (n, p) = (traj.state_dim(), traj.input_dim());
    let mut total = 0.0;
    for t in 0..traj.len() {
        for r in 0..n {
            let mut pred = 0.0;
            for c in 0..n {
                pred += a[(r, c)] * traj.states()[(c, t)];
            }
            for c in 0..p {
                pred += b[(r, c)] * traj.inputs()[(c, t)];
            }
            let e = traj.states()[(r, t + 1)] - pred;
            total += e * e;
        }
    }
    total
}

/// Step-by-step recursion with the noise sequence supplied explicitly.
pub fn loop_recursion(a: &DMatrix<f64>, b: &DMatrix<f64>, x0: &[f64], inputs: &DMatrix<f64>, noise: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x0.len();
    let steps = inputs.ncols();
    let mut out = DMatrix::zeros(n, steps + 1);
    for r in 0..n {
        out[(r, 0)] = x0[r];
    }
    for t in 0..steps {
        for r in 0..n {
            let mut v = noise[(r, t)];
            for c in 0..n {
                v += a[(r, c)] * out[(c, t)];
            }
            for c in 0..inputs.nrows() {
                v += b[(r, c)] * inputs[(c, t)];
            }
            out[(r, t + 1)] = v;
        }
    }
    out
}

/// `1 - mean_k R^2_k` computed coordinate by coordinate.
pub fn one_minus_mean_r2(a: &DMatrix<f64>, predictors: &DMatrix<f64>, targets: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let p = predictors.ncols();
    let mut r2_sum = 0.0;
    for k in 0..n {
        let mut mean = 0.0;
        for i in 0..p {
            mean += targets[(k, i)];
        }
        mean /= p as f64;
        let (mut ss_res, mut ss_tot) = (0.0, 0.0);
        for i in 0..p {
            let mut pred = 0.0;
            for c in 0..n {
                pred += a[(k, c)] * predictors[(c, i)];
            }
            ss_res += (targets[(k, i)] - pred).powi(2);
            ss_tot += (targets[(k, i)] - mean).powi(2);
        }
        r2_sum += 1.0 - ss_res / ss_tot;
    }
    1.0 - r2_sum / n as f64
}

/// Group-lasso optimality at `bundle` for weight `lambda`:
/// (largest zero-group gradient norm / lambda, largest nonzero-group residual / lambda).
pub fn group_kkt(data: &[RegressionData], bundle: &MatrixBundle, lambda: f64) -> (f64, f64) {
    let grads: Vec<DMatrix<f64>> = data
        .iter()
        .zip(bundle.iter())
        .map(|(d, a)| (d.targets() - a * d.predictors()) * d.predictors().transpose() * -2.0)
        .collect();
    let n = bundle.dim();
    let (mut zero_ratio, mut residual): (f64, f64) = (0.0, 0.0);
    for r in 0..n {
        for c in 0..n {
            let g = DVector::from_iterator(grads.len(), grads.iter().map(|m| m[(r, c)]));
            let a = bundle.group(r, c);
            let an = a.norm();
            if an == 0.0 {
                zero_ratio = zero_ratio.max(g.norm() / lambda);
            } else {
                residual = residual.max((g + a * (lambda / an)).norm() / lambda);
            }
        }
    }
    (zero_ratio, residual)
}

/// Numerical rank by the relative cutoff `1e-10 * sigma_max`.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    let s = m.clone().svd(false, false).singular_values;
    let top = s.max();
    if top == 0.0 {
        return 0;
    }
    s.iter().filter(|&&v| v > 1e-10 * top).count()
}
