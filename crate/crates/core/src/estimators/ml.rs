//! Unconstrained and support-constrained maximum-likelihood estimators.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{covariances, CovariancePair, EstimationResult, EstimatorKind, SolverConfig};
use crate::error::{Error, Result};
use crate::linalg::{right_solve_spd, spd_condition_number, symmetric_pinv};
use crate::sim::Trajectory;

/// Largest entry of `|A Σ₀ − Σ₁|` over `mask`, relative to `max |Σ₁|`.
pub(super) fn relative_gradient(
    cov: &CovariancePair,
    a: &DMatrix<f64>,
    mask: impl Fn(usize, usize) -> bool,
) -> f64 {
    let g = a * &cov.sigma0 - &cov.sigma1;
    let scale = cov.sigma1.amax().max(f64::MIN_POSITIVE);
    let mut worst = 0.0_f64;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            if mask(i, j) {
                worst = worst.max(g[(i, j)].abs());
            }
        }
    }
    worst / scale
}

fn singular_sigma0(cov: &CovariancePair, condition: f64, limit: f64) -> Error {
    let dim = cov.dim();
    Error::Singular(format!(
        "Σ₀ is singular or ill-conditioned (condition number {condition:.3e} exceeds {limit:.1e}); \
         the maximum-likelihood estimate needs at least 2N+2 = {} samples, got T = {}",
        dim + 2,
        cov.n_samples
    ))
}

/// `Â = Σ₁ Σ₀⁻¹`.
pub fn estimate_uml(cov: &CovariancePair, config: &SolverConfig) -> Result<EstimationResult> {
    let condition = spd_condition_number(&cov.sigma0);
    let a_hat = if condition <= config.condition_limit {
        right_solve_spd(&cov.sigma1, &cov.sigma0)
            .map_err(|_| singular_sigma0(cov, condition, config.condition_limit))?
    } else if config.pseudo_inverse {
        &cov.sigma1 * symmetric_pinv(&cov.sigma0, 1.0 / config.condition_limit)
    } else {
        return Err(singular_sigma0(cov, condition, config.condition_limit));
    };
    let objective = cov.objective(&a_hat);
    let mut result = EstimationResult::new(EstimatorKind::Uml, a_hat, objective);
    result.diagnostics.optimality_residual = relative_gradient(cov, &result.a_hat, |_, _| true);
    Ok(result)
}

/// Lagged regression pair: rows of `Xᵀ` are `X_0..X_{T−2}`, rows of `Yᵀ`
/// are `X_1..X_{T−1}`.
fn regression_pair(traj: &Trajectory) -> (DMatrix<f64>, DMatrix<f64>) {
    let x = traj.states();
    let t = traj.len();
    (
        x.columns(0, t - 1).transpose(),
        x.columns(1, t - 1).transpose(),
    )
}

/// `argmin_C ‖Xᵀ C − Yᵀ‖_F` by Householder QR of `Xᵀ`; `None` when `R` has a
/// zero pivot.
fn least_squares(xt: DMatrix<f64>, mut yt: DMatrix<f64>) -> Option<DMatrix<f64>> {
    let k = xt.ncols();
    let qr = xt.qr();
    qr.q_tr_mul(&mut yt);
    qr.r().solve_upper_triangular(&yt.rows(0, k).into_owned())
}

/// UML computed from the samples themselves rather than from `Σ₀⁻¹`.
///
/// Same estimator as [`estimate_uml`], but the QR solve loses accuracy like
/// `cond(X)` instead of `cond(Σ₀) = cond(X)²`, so rows that the data
/// determine exactly (the angle rows, `δ_{t+1} = δ_t + Δt·ω_t`) come back
/// to near machine precision even from short, ill-conditioned windows.
pub fn estimate_uml_traj(traj: &Trajectory, config: &SolverConfig) -> Result<EstimationResult> {
    let cov = covariances(traj)?;
    uml_from_samples(traj, &cov, config)
}

pub(crate) fn uml_from_samples(
    traj: &Trajectory,
    cov: &CovariancePair,
    config: &SolverConfig,
) -> Result<EstimationResult> {
    let condition = spd_condition_number(&cov.sigma0);
    if condition > config.condition_limit {
        return estimate_uml(cov, config);
    }
    let (xt, yt) = regression_pair(traj);
    let a_hat = least_squares(xt, yt)
        .ok_or_else(|| singular_sigma0(cov, condition, config.condition_limit))?
        .transpose();
    let objective = cov.objective(&a_hat);
    let mut result = EstimationResult::new(EstimatorKind::Uml, a_hat, objective);
    result.diagnostics.optimality_residual = relative_gradient(cov, &result.a_hat, |_, _| true);
    Ok(result)
}

/// Columns row `i` may use when the lower-right N×N block is diagonal.
pub(super) fn permitted_columns(i: usize, n_gen: usize) -> Vec<usize> {
    if i < n_gen {
        (0..2 * n_gen).collect()
    } else {
        (0..n_gen).chain(std::iter::once(i)).collect()
    }
}

pub(super) fn cml_mask(n_gen: usize) -> impl Fn(usize, usize) -> bool {
    move |i, j| i < n_gen || j < n_gen || i == j
}

/// Least squares with the lower-right N×N block of `A` constrained to be
/// diagonal, solved row by row by QR on the samples.
pub fn estimate_cml(traj: &Trajectory, config: &SolverConfig) -> Result<EstimationResult> {
    let cov = covariances(traj)?;
    cml_from_samples(traj, &cov, config)
}

fn rank_deficient_row(i: usize, condition: f64, n_samples: usize) -> Error {
    Error::Singular(format!(
        "restricted regressor for row {i} is rank-deficient \
         (condition number {condition:.3e}); need more samples than {n_samples}"
    ))
}

pub(crate) fn cml_from_samples(
    traj: &Trajectory,
    cov: &CovariancePair,
    config: &SolverConfig,
) -> Result<EstimationResult> {
    let n_gen = traj.n_gen();
    let dim = cov.dim();
    let (xt, yt) = regression_pair(traj);
    let rows: Vec<Result<(Vec<usize>, DVector<f64>)>> = (0..dim)
        .into_par_iter()
        .map(|i| {
            let cols = permitted_columns(i, n_gen);
            let gram = cov.sigma0.select_rows(&cols).select_columns(&cols);
            let condition = spd_condition_number(&gram);
            if condition > config.condition_limit {
                return Err(rank_deficient_row(i, condition, cov.n_samples));
            }
            let coef = least_squares(xt.select_columns(&cols), yt.columns(i, 1).into_owned())
                .ok_or_else(|| rank_deficient_row(i, condition, cov.n_samples))?;
            Ok((cols, coef.column(0).into_owned()))
        })
        .collect();
    assemble_cml(cov, n_gen, rows)
}

fn assemble_cml(
    cov: &CovariancePair,
    n_gen: usize,
    rows: Vec<Result<(Vec<usize>, DVector<f64>)>>,
) -> Result<EstimationResult> {
    let dim = cov.dim();
    let mut a_hat = DMatrix::zeros(dim, dim);
    for (i, row) in rows.into_iter().enumerate() {
        let (cols, coef) = row?;
        for (k, &j) in cols.iter().enumerate() {
            a_hat[(i, j)] = coef[k];
        }
    }
    let objective = cov.objective(&a_hat);
    let mut result = EstimationResult::new(EstimatorKind::Cml, a_hat, objective);
    result.diagnostics.optimality_residual = relative_gradient(cov, &result.a_hat, cml_mask(n_gen));
    Ok(result)
}

/// [`estimate_cml`] from precomputed cross-correlations.
///
/// The objective is row-separable and the constraint is a support pattern,
/// so each row solves its own normal equations restricted to its permitted
/// columns.
pub fn estimate_cml_from(
    cov: &CovariancePair,
    n_gen: usize,
    config: &SolverConfig,
) -> Result<EstimationResult> {
    let dim = cov.dim();
    if dim != 2 * n_gen {
        return Err(Error::dimension("cross-correlations vs 2N", 2 * n_gen, dim));
    }
    let rows: Vec<Result<(Vec<usize>, DVector<f64>)>> = (0..dim)
        .into_par_iter()
        .map(|i| {
            let cols = permitted_columns(i, n_gen);
            let gram = cov.sigma0.select_rows(&cols).select_columns(&cols);
            let rhs = DVector::from_iterator(cols.len(), cols.iter().map(|&j| cov.sigma1[(i, j)]));
            let condition = spd_condition_number(&gram);
            if condition > config.condition_limit {
                return Err(rank_deficient_row(i, condition, cov.n_samples));
            }
            let chol = gram
                .cholesky()
                .ok_or_else(|| rank_deficient_row(i, condition, cov.n_samples))?;
            Ok((cols, chol.solve(&rhs)))
        })
        .collect();
    assemble_cml(cov, n_gen, rows)
}
