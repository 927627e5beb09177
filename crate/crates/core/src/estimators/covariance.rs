use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::sim::Trajectory;

/// Empirical lag-0 and lag-1 cross-correlations of a trajectory, the
/// sufficient statistics of every least-squares estimator in this crate.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariancePair {
    /// `(1/(T−1)) Σ_{t<T} X_t X_tᵀ`
    pub sigma0: DMatrix<f64>,
    /// `(1/(T−1)) Σ_{t<T} X_{t+1} X_tᵀ`
    pub sigma1: DMatrix<f64>,
    /// Diagonal of `(1/(T−1)) Σ_{t<T} X_{t+1} X_{t+1}ᵀ`; needed to evaluate
    /// the least-squares objective without the raw samples.
    pub target_moment: DVector<f64>,
    /// Number of samples `T`.
    pub n_samples: usize,
}

impl CovariancePair {
    pub fn dim(&self) -> usize {
        self.sigma0.nrows()
    }

    /// `T − 1`, the number of one-step transitions.
    pub fn transitions(&self) -> f64 {
        (self.n_samples - 1) as f64
    }

    /// `Σ_t ‖X_{t+1} − a_i·X_t‖²` for a single row `a_i`.
    pub fn row_objective(&self, i: usize, row: &DVector<f64>) -> f64 {
        let quad = row.dot(&(&self.sigma0 * row));
        let cross = self.sigma1.row(i).transpose().dot(row);
        self.transitions() * (quad - 2.0 * cross + self.target_moment[i])
    }

    /// Magnitude of the terms summed in [`row_objective`](Self::row_objective);
    /// rounding error in the objective is proportional to it.
    pub(crate) fn row_objective_scale(&self, i: usize, row: &DVector<f64>) -> f64 {
        let quad = row.dot(&(&self.sigma0 * row)).abs();
        let cross = self.sigma1.row(i).transpose().dot(row).abs();
        self.transitions() * (quad + 2.0 * cross + self.target_moment[i].abs())
    }

    /// Least-squares objective `Σ_t ‖X_{t+1} − A X_t‖²`.
    pub fn objective(&self, a: &DMatrix<f64>) -> f64 {
        (0..self.dim())
            .map(|i| self.row_objective(i, &a.row(i).transpose()))
            .sum()
    }

    /// Gradient of [`objective`](Self::objective): `2(T−1)(A Σ₀ − Σ₁)`.
    pub fn gradient(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        (a * &self.sigma0 - &self.sigma1) * (2.0 * self.transitions())
    }
}

/// Computes Σ₀ and Σ₁ with divisor `T − 1`.
pub fn covariances(traj: &Trajectory) -> Result<CovariancePair> {
    let t = traj.len();
    if t < 2 {
        return Err(Error::SampleDeficit {
            available: t,
            required: 1,
            context: "cross-correlations need at least two samples".into(),
        });
    }
    let x = traj.states();
    let past = x.columns(0, t - 1);
    let next = x.columns(1, t - 1);
    let scale = 1.0 / (t - 1) as f64;
    let sigma0 = (past * past.transpose()) * scale;
    let sigma1 = (next * past.transpose()) * scale;
    let target_moment = DVector::from_iterator(
        traj.dim(),
        next.row_iter()
            .map(|r| r.iter().map(|v| v * v).sum::<f64>() * scale),
    );
    Ok(CovariancePair {
        sigma0: (&sigma0 + sigma0.transpose()) * 0.5,
        sigma1,
        target_moment,
        n_samples: t,
    })
}

/// Direct `Σ_t ‖X_{t+1} − A X_t‖²` from the samples.
pub fn residual_sum_of_squares(traj: &Trajectory, a: &DMatrix<f64>) -> Result<f64> {
    if a.nrows() != traj.dim() || a.ncols() != traj.dim() {
        return Err(Error::dimension(
            "estimate vs trajectory",
            traj.dim(),
            a.nrows(),
        ));
    }
    let t = traj.len();
    if t < 2 {
        return Ok(0.0);
    }
    let x = traj.states();
    let resid = x.columns(1, t - 1) - a * x.columns(0, t - 1);
    Ok(resid.norm_squared())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;
    use crate::model::DiscreteSystem;
    use crate::sim::simulate;
    use nalgebra::SymmetricEigen;

    #[test]
    fn constant_trajectory() {
        let x = DVector::from_vec(vec![1.0, -2.0]);
        let states = DMatrix::from_fn(2, 5, |r, _| x[r]);
        let traj = Trajectory::new(1, 0.1, states, None).unwrap();
        let cov = covariances(&traj).unwrap();
        let outer = &x * x.transpose();
        assert!(max_abs_diff(&cov.sigma0, &outer) < 1e-15);
        assert!(max_abs_diff(&cov.sigma1, &outer) < 1e-15);
    }

    #[test]
    fn two_samples() {
        let states = DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 2.0, 4.0]);
        let traj = Trajectory::new(1, 0.1, states, None).unwrap();
        let cov = covariances(&traj).unwrap();
        let x1 = DVector::from_vec(vec![1.0, 2.0]);
        let x2 = DVector::from_vec(vec![3.0, 4.0]);
        assert_eq!(cov.sigma0, &x1 * x1.transpose());
        assert_eq!(cov.sigma1, &x2 * x1.transpose());
    }

    #[test]
    fn single_sample_is_rejected() {
        let traj = Trajectory::new(1, 0.1, DMatrix::zeros(2, 1), None).unwrap();
        assert!(matches!(
            covariances(&traj),
            Err(Error::SampleDeficit { .. })
        ));
    }

    #[test]
    fn full_rank_at_2n_plus_2_samples() {
        // Fully excited noise so every coordinate is random.
        let n = 3;
        let a = DMatrix::from_fn(2 * n, 2 * n, |i, j| if i == j { 0.5 } else { 0.05 });
        let sys = DiscreteSystem::new(n, a, DVector::from_element(2 * n, 1.0), 0.1).unwrap();
        let traj = simulate(&sys, 2 * n + 1, &DVector::zeros(2 * n), 11).unwrap();
        assert_eq!(traj.len(), 2 * n + 2);
        let cov = covariances(&traj).unwrap();
        let eig = SymmetricEigen::new(cov.sigma0.clone());
        let tol = eig.eigenvalues.amax() * 1e-12;
        let rank = eig.eigenvalues.iter().filter(|l| **l > tol).count();
        assert_eq!(rank, 2 * n);
    }

    #[test]
    fn objective_matches_direct_residuals() {
        let a = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, -0.2, 0.7]);
        let sys =
            DiscreteSystem::new(1, a.clone(), DVector::from_vec(vec![0.3, 0.5]), 0.1).unwrap();
        let traj = simulate(&sys, 300, &DVector::from_vec(vec![1.0, 0.0]), 4).unwrap();
        let cov = covariances(&traj).unwrap();
        let probe = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.3, 0.2]);
        let direct = residual_sum_of_squares(&traj, &probe).unwrap();
        assert!((cov.objective(&probe) - direct).abs() < 1e-10 * direct);
    }
}
