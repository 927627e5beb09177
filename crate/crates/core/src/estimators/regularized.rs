//! Penalized least squares: Tikhonov, LASSO and sparse-plus-low-rank.

use nalgebra::{DMatrix, DVector, SVD};
use rayon::prelude::*;

use super::ml::relative_gradient;
use super::{
    check_penalty, covariances, estimate_uml, CovariancePair, EstimationResult, EstimatorKind,
    SolverConfig,
};
use crate::error::{Error, Result};
use crate::linalg::largest_symmetric_eigenvalue;
use crate::sim::Trajectory;

/// Minimizer of `Σ_t ‖X_{t+1} − A X_t‖² + ν ‖A − A_prev‖_F²`:
/// `Â = (Σ₁ + c A_prev)(Σ₀ + c I)⁻¹` with `c = ν/(T−1)`.
pub fn estimate_tikhonov(
    cov: &CovariancePair,
    a_prev: &DMatrix<f64>,
    nu: f64,
    config: &SolverConfig,
) -> Result<EstimationResult> {
    check_penalty("nu", nu)?;
    let dim = cov.dim();
    if a_prev.nrows() != dim || a_prev.ncols() != dim {
        return Err(Error::dimension(
            "prior estimate",
            dim,
            a_prev.nrows().max(a_prev.ncols()),
        ));
    }
    let a_hat = if nu == 0.0 {
        estimate_uml(cov, config)?.a_hat
    } else {
        let c = nu / cov.transitions();
        let lhs = &cov.sigma0 + DMatrix::identity(dim, dim) * c;
        let rhs = &cov.sigma1 + a_prev * c;
        let chol = lhs.cholesky().ok_or_else(|| {
            Error::Numerical("regularized Gram matrix is not positive definite".into())
        })?;
        chol.solve(&rhs.transpose()).transpose()
    };
    let objective = cov.objective(&a_hat) + nu * (&a_hat - a_prev).norm_squared();
    Ok(EstimationResult::new(EstimatorKind::Tikhonov, a_hat, objective).with_param("nu", nu))
}

fn soft_threshold(x: f64, threshold: f64) -> f64 {
    if x > threshold {
        x - threshold
    } else if x < -threshold {
        x + threshold
    } else {
        0.0
    }
}

fn l1(v: &DVector<f64>) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

struct RowOutcome {
    coef: DVector<f64>,
    iterations: usize,
}

/// FISTA with function-value restart on one row of the LASSO problem.
fn lasso_row(
    cov: &CovariancePair,
    i: usize,
    lambda: f64,
    lipschitz: f64,
    config: &SolverConfig,
) -> Result<RowOutcome> {
    let dim = cov.dim();
    let target = cov.sigma1.row(i).transpose();
    let transitions = cov.transitions();
    // A = 0 is optimal iff the gradient there is dominated by λ.
    if 2.0 * target.amax() * transitions <= lambda {
        return Ok(RowOutcome {
            coef: DVector::zeros(dim),
            iterations: 0,
        });
    }
    let step = 1.0 / lipschitz;
    let objective = |v: &DVector<f64>| cov.row_objective(i, v) + lambda * l1(v);
    let scale =
        |v: &DVector<f64>| cov.row_objective_scale(i, v) + lambda * l1(v) + f64::MIN_POSITIVE;

    let certificate_tol = 1e3 * config.tolerance * 2.0 * transitions * cov.sigma1.amax();
    let row_violation = |v: &DVector<f64>| -> f64 {
        let grad = (&cov.sigma0 * v - &target) * (2.0 * transitions);
        grad.iter()
            .zip(v.iter())
            .map(|(g, a)| {
                if *a == 0.0 {
                    (g.abs() - lambda).max(0.0)
                } else {
                    (g + lambda * a.signum()).abs()
                }
            })
            .fold(0.0, f64::max)
    };

    let prox_step = |y: &DVector<f64>| -> DVector<f64> {
        let grad = (&cov.sigma0 * y - &target) * (2.0 * transitions);
        let mut z = y - grad * step;
        z.apply(|v| *v = soft_threshold(*v, step * lambda));
        z
    };

    let mut x = DVector::zeros(dim);
    let mut f_x = objective(&x);
    let mut y = x.clone();
    let mut momentum = 1.0_f64;
    let mut last_change = f64::INFINITY;
    for iteration in 1..=config.max_iterations {
        let mut x_new = prox_step(&y);
        let mut f_new = objective(&x_new);
        if f_new > f_x {
            // Momentum overshot: restart with a plain proximal step from x.
            momentum = 1.0;
            x_new = prox_step(&x);
            f_new = objective(&x_new);
        }
        let change = (f_x - f_new).abs() / scale(&x_new);
        last_change = change;
        // A flat objective can stall well before the subgradient conditions
        // hold, so both have to be met.
        if change <= config.tolerance && row_violation(&x_new) <= certificate_tol {
            return Ok(RowOutcome {
                coef: x_new,
                iterations: iteration,
            });
        }
        let next_momentum = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        y = &x_new + (&x_new - &x) * ((momentum - 1.0) / next_momentum);
        momentum = next_momentum;
        x = x_new;
        f_x = f_new;
    }
    Err(Error::NonConvergence {
        solver: "LASSO proximal gradient",
        iterations: config.max_iterations,
        last_relative_change: last_change,
    })
}

/// LASSO estimate: minimizes `Σ_t ‖X_{t+1} − A X_t‖² + λ Σ_ij |A_ij|`.
pub fn estimate_lasso(
    traj: &Trajectory,
    lambda: f64,
    config: &SolverConfig,
) -> Result<EstimationResult> {
    let cov = covariances(traj)?;
    estimate_lasso_from(&cov, lambda, config)
}

/// [`estimate_lasso`] from precomputed cross-correlations; solved row by row.
pub fn estimate_lasso_from(
    cov: &CovariancePair,
    lambda: f64,
    config: &SolverConfig,
) -> Result<EstimationResult> {
    check_penalty("lambda", lambda)?;
    let dim = cov.dim();
    let lipschitz = 2.0 * cov.transitions() * largest_symmetric_eigenvalue(&cov.sigma0);
    if !(lipschitz > 0.0 && lipschitz.is_finite()) {
        return Err(Error::Singular("Σ₀ is zero; nothing to regress on".into()));
    }
    let rows: Vec<Result<RowOutcome>> = (0..dim)
        .into_par_iter()
        .map(|i| lasso_row(cov, i, lambda, lipschitz, config))
        .collect();
    let mut a_hat = DMatrix::zeros(dim, dim);
    let mut iterations = 0;
    for (i, row) in rows.into_iter().enumerate() {
        let row = row?;
        a_hat.set_row(i, &row.coef.transpose());
        iterations = iterations.max(row.iterations);
    }
    let objective = cov.objective(&a_hat) + lambda * a_hat.iter().map(|x| x.abs()).sum::<f64>();
    let mut result =
        EstimationResult::new(EstimatorKind::Lasso, a_hat, objective).with_param("lambda", lambda);
    result.diagnostics.iterations = iterations;
    result.diagnostics.optimality_residual =
        lasso_optimality_violation(cov, &result.a_hat, lambda) / data_scale(cov);
    Ok(result)
}

fn data_scale(cov: &CovariancePair) -> f64 {
    (2.0 * cov.transitions() * cov.sigma1.amax()).max(f64::MIN_POSITIVE)
}

/// Largest violation of the LASSO subgradient conditions at `a`:
/// `|g_ij| ≤ λ` where `a_ij = 0`, `g_ij = −λ·sign(a_ij)` elsewhere, with
/// `g` the gradient of the least-squares part.
pub fn lasso_optimality_violation(cov: &CovariancePair, a: &DMatrix<f64>, lambda: f64) -> f64 {
    let g = cov.gradient(a);
    let mut worst = 0.0_f64;
    for (gij, aij) in g.iter().zip(a.iter()) {
        let v = if *aij == 0.0 {
            (gij.abs() - lambda).max(0.0)
        } else {
            (gij + lambda * aij.signum()).abs()
        };
        worst = worst.max(v);
    }
    worst
}

/// Singular-value soft-thresholding, the proximal map of `τ‖·‖_*`.
fn singular_value_threshold(m: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    let svd = SVD::new(m.clone(), true, true);
    if svd.singular_values.iter().all(|s| *s <= tau) {
        return DMatrix::zeros(m.nrows(), m.ncols());
    }
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᵀ");
    let shrunk = svd.singular_values.map(|s| (s - tau).max(0.0));
    u * DMatrix::from_diagonal(&shrunk) * v_t
}

fn nuclear_norm(m: &DMatrix<f64>) -> f64 {
    m.singular_values().sum()
}

/// Sparse-plus-low-rank estimate: minimizes
/// `Σ_t ‖X_{t+1} − (A + L) X_t‖² + λ‖A‖₁ + η‖L‖_*` over `(A, L)`.
pub fn estimate_sparse_low_rank(
    traj: &Trajectory,
    lambda: f64,
    eta: f64,
    config: &SolverConfig,
) -> Result<EstimationResult> {
    let cov = covariances(traj)?;
    estimate_sparse_low_rank_from(&cov, lambda, eta, config)
}

/// Alternating proximal-gradient steps on `A` (soft threshold) and `L`
/// (singular-value threshold). Each block step uses the full Lipschitz
/// step, so the objective never increases; an increase beyond rounding is
/// reported as a numerical failure.
pub fn estimate_sparse_low_rank_from(
    cov: &CovariancePair,
    lambda: f64,
    eta: f64,
    config: &SolverConfig,
) -> Result<EstimationResult> {
    check_penalty("lambda", lambda)?;
    check_penalty("eta", eta)?;
    let dim = cov.dim();
    let lipschitz = 2.0 * cov.transitions() * largest_symmetric_eigenvalue(&cov.sigma0);
    if !(lipschitz > 0.0 && lipschitz.is_finite()) {
        return Err(Error::Singular("Σ₀ is zero; nothing to regress on".into()));
    }
    let step = 1.0 / lipschitz;

    let objective = |a: &DMatrix<f64>, l: &DMatrix<f64>| {
        cov.objective(&(a + l))
            + lambda * a.iter().map(|x| x.abs()).sum::<f64>()
            + eta * nuclear_norm(l)
    };
    let scale = |a: &DMatrix<f64>, l: &DMatrix<f64>| {
        let sum = a + l;
        (0..dim)
            .map(|i| cov.row_objective_scale(i, &sum.row(i).transpose()))
            .sum::<f64>()
            + lambda * a.iter().map(|x| x.abs()).sum::<f64>()
            + eta * nuclear_norm(l)
            + f64::MIN_POSITIVE
    };

    let mut a = DMatrix::zeros(dim, dim);
    let mut l = DMatrix::zeros(dim, dim);
    let mut f = objective(&a, &l);
    let mut history = vec![f];
    let mut last_change = f64::INFINITY;
    for iteration in 1..=config.max_iterations {
        let grad = cov.gradient(&(&a + &l));
        a = (&a - grad * step).map(|v| soft_threshold(v, step * lambda));
        let grad = cov.gradient(&(&a + &l));
        l = singular_value_threshold(&(&l - grad * step), step * eta);

        let f_new = objective(&a, &l);
        let s = scale(&a, &l);
        if f_new - f > 1e3 * f64::EPSILON * s {
            return Err(Error::Numerical(format!(
                "sparse-plus-low-rank objective increased at iteration {iteration}: {f} -> {f_new}"
            )));
        }
        history.push(f_new);
        last_change = (f - f_new).abs() / s;
        f = f_new;
        if last_change <= config.tolerance {
            let mut result = EstimationResult::new(EstimatorKind::SparseLowRank, a, f)
                .with_param("lambda", lambda)
                .with_param("eta", eta);
            result.l_hat = Some(l);
            result.diagnostics.iterations = iteration;
            result.diagnostics.objective_history = history;
            result.diagnostics.optimality_residual = relative_gradient(
                cov,
                &(&result.a_hat + result.l_hat.as_ref().unwrap()),
                |_, _| true,
            );
            return Ok(result);
        }
    }
    Err(Error::NonConvergence {
        solver: "sparse-plus-low-rank alternating proximal gradient",
        iterations: config.max_iterations,
        last_relative_change: last_change,
    })
}
