//! Estimators of the one-step matrix `A` of `X_{t+1} = A X_t + B ξ_t`.
//!
//! All of them minimize (possibly penalized or constrained versions of) the
//! least-squares objective `Σ_t ‖X_{t+1} − A X_t‖²`, which is the negative
//! log-likelihood in `A` under Gaussian noise. Penalty weights multiply the
//! raw, unnormalized sum, so they have to be re-tuned when `T` changes.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

mod covariance;
mod ml;
mod noise;
mod regularized;
mod structure;

pub use covariance::{covariances, residual_sum_of_squares, CovariancePair};
pub(crate) use ml::{cml_from_samples, uml_from_samples};
pub use ml::{estimate_cml, estimate_cml_from, estimate_uml, estimate_uml_traj};
pub use noise::estimate_b;
pub use regularized::{
    estimate_lasso, estimate_lasso_from, estimate_sparse_low_rank, estimate_sparse_low_rank_from,
    estimate_tikhonov, lasso_optimality_violation,
};
pub use structure::{threshold_structure, zeroed_by_threshold};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EstimatorKind {
    #[serde(rename = "UML")]
    Uml,
    #[serde(rename = "CML")]
    Cml,
    #[serde(rename = "TIKHONOV")]
    Tikhonov,
    #[serde(rename = "LASSO")]
    Lasso,
    #[serde(rename = "SPARSE_LOW_RANK")]
    SparseLowRank,
}

impl EstimatorKind {
    pub fn tag(self) -> &'static str {
        match self {
            EstimatorKind::Uml => "UML",
            EstimatorKind::Cml => "CML",
            EstimatorKind::Tikhonov => "TIKHONOV",
            EstimatorKind::Lasso => "LASSO",
            EstimatorKind::SparseLowRank => "SPARSE_LOW_RANK",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "uml" => Ok(EstimatorKind::Uml),
            "cml" => Ok(EstimatorKind::Cml),
            "tikhonov" => Ok(EstimatorKind::Tikhonov),
            "lasso" => Ok(EstimatorKind::Lasso),
            "sparse_low_rank" | "slr" => Ok(EstimatorKind::SparseLowRank),
            other => Err(Error::validation(
                "estimator",
                format!("unknown estimator '{other}'"),
            )),
        }
    }
}

/// Numerical settings shared by the estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Iterative solvers stop once the relative objective change drops below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Σ₀ condition numbers above this are treated as singular.
    pub condition_limit: f64,
    /// Use a pseudo-inverse instead of failing on ill-conditioned Σ₀.
    pub pseudo_inverse: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tolerance: 1e-10,
            max_iterations: 100_000,
            condition_limit: 1e12,
            pseudo_inverse: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub iterations: usize,
    pub converged: bool,
    /// Largest violation of the first-order optimality conditions.
    pub optimality_residual: f64,
    /// Objective after each iteration (sparse-plus-low-rank only).
    pub objective_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    pub estimator: EstimatorKind,
    pub a_hat: DMatrix<f64>,
    pub hyperparams: BTreeMap<String, f64>,
    /// Final value of the minimized objective, penalties included.
    pub objective: f64,
    pub l_hat: Option<DMatrix<f64>>,
    pub b_hat: Option<DVector<f64>>,
    pub diagnostics: Diagnostics,
}

impl EstimationResult {
    fn new(estimator: EstimatorKind, a_hat: DMatrix<f64>, objective: f64) -> Self {
        EstimationResult {
            estimator,
            a_hat,
            hyperparams: BTreeMap::new(),
            objective,
            l_hat: None,
            b_hat: None,
            diagnostics: Diagnostics {
                converged: true,
                ..Diagnostics::default()
            },
        }
    }

    fn with_param(mut self, name: &str, value: f64) -> Self {
        self.hyperparams.insert(name.to_string(), value);
        self
    }
}

fn check_penalty(name: &str, value: f64) -> Result<(), Error> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(Error::validation(
            name,
            format!("must be a nonnegative number, got {value}"),
        ))
    }
}
