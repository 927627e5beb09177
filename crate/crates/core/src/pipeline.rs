//! Simulate → estimate → evaluate, for single runs and parameter sweeps.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::analysis::{relative_error, to_continuous};
use crate::error::{Error, Result};
use crate::estimators::{
    cml_from_samples, covariances, estimate_b, estimate_lasso_from, estimate_sparse_low_rank_from,
    estimate_tikhonov, threshold_structure, uml_from_samples, EstimationResult, EstimatorKind,
    SolverConfig,
};
use crate::io::{load_matrix, samples_in, EstimatorSpec, ExperimentConfig, SweepVariable};
use crate::linalg::CompensatedSum;
use crate::model::{build_discrete, ContinuousSystem, DiscreteSystem, GridModel};
use crate::rng::derive_seed;
use crate::sim::{default_burn_in, simulate, steady_start, subsample, Trajectory};

/// Ground-truth dynamics of a model at the simulation step.
#[derive(Debug, Clone)]
pub struct Truth {
    pub continuous: ContinuousSystem,
    pub discrete: DiscreteSystem,
}

impl Truth {
    pub fn new(model: &GridModel, dt_base: f64) -> Result<Self> {
        let continuous = model.continuous_system()?;
        let discrete = build_discrete(&continuous, dt_base)?;
        Ok(Truth {
            continuous,
            discrete,
        })
    }

    pub fn n_gen(&self) -> usize {
        self.continuous.n_gen
    }
}

/// `n_samples` samples recorded after a burn-in from the origin.
///
/// The burn-in draws from `derive_seed(seed, u64::MAX)` and the recorded
/// part from `seed`; with `burn_in = None` this is exactly
/// [`crate::sim::simulate_stationary`].
pub fn generate(
    sys: &DiscreteSystem,
    n_samples: usize,
    seed: u64,
    burn_in: Option<usize>,
) -> Result<Trajectory> {
    if n_samples < 2 {
        return Err(Error::validation("n_samples", "must be at least 2"));
    }
    let burn_in = match burn_in {
        Some(b) => b,
        None => default_burn_in(sys)?,
    };
    let x0 = steady_start(sys, burn_in, derive_seed(seed, u64::MAX))?;
    simulate(sys, n_samples - 1, &x0, seed)
}

/// An estimator spec with its prior matrix loaded.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedEstimator {
    pub spec: EstimatorSpec,
    pub prior: Option<DMatrix<f64>>,
}

impl PreparedEstimator {
    pub fn plain(kind: EstimatorKind) -> Self {
        PreparedEstimator {
            spec: EstimatorSpec::plain(kind),
            prior: None,
        }
    }

    /// Short name used in tables: the kind tag, plus hyperparameters when
    /// the estimator has any.
    pub fn label(&self) -> String {
        let s = &self.spec;
        let mut params = Vec::new();
        for (name, v) in [("lambda", s.lambda), ("eta", s.eta), ("nu", s.nu)] {
            if let Some(v) = v {
                params.push(format!("{name}={v}"));
            }
        }
        if params.is_empty() {
            s.kind.tag().to_string()
        } else {
            format!("{}[{}]", s.kind.tag(), params.join(";"))
        }
    }
}

pub fn prepare(specs: &[EstimatorSpec]) -> Result<Vec<PreparedEstimator>> {
    specs
        .iter()
        .map(|spec| {
            spec.validate()?;
            let prior = spec.prior.as_deref().map(load_matrix).transpose()?;
            Ok(PreparedEstimator {
                spec: spec.clone(),
                prior,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateOptions {
    pub stride: usize,
    pub threshold: bool,
    pub estimate_b: bool,
    pub solver: SolverConfig,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            stride: 1,
            threshold: false,
            estimate_b: false,
            solver: SolverConfig::default(),
        }
    }
}

/// One estimator's output on one (strided) trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub label: String,
    /// The discrete estimate, after thresholding when requested.
    pub result: EstimationResult,
    pub thresholded: bool,
    /// `(Â − I)/Δt` at the strided sampling interval.
    pub a_d_hat: DMatrix<f64>,
    pub dt: f64,
    pub n_samples: usize,
}

/// Errors unless the trajectory has more than `2N + 2` samples.
pub fn require_samples(traj: &Trajectory) -> Result<()> {
    let needed = traj.dim() + 2;
    if traj.len() <= needed {
        return Err(Error::SampleDeficit {
            available: traj.len(),
            required: needed,
            context: format!(
                "a {}-state system needs more than 2N+2 samples after striding",
                traj.dim()
            ),
        });
    }
    Ok(())
}

fn run_one(
    est: &PreparedEstimator,
    traj: &Trajectory,
    cov: &crate::estimators::CovariancePair,
    solver: &SolverConfig,
) -> Result<EstimationResult> {
    let s = &est.spec;
    match s.kind {
        EstimatorKind::Uml => uml_from_samples(traj, cov, solver),
        EstimatorKind::Cml => cml_from_samples(traj, cov, solver),
        EstimatorKind::Lasso => estimate_lasso_from(cov, s.lambda.unwrap_or_default(), solver),
        EstimatorKind::SparseLowRank => estimate_sparse_low_rank_from(
            cov,
            s.lambda.unwrap_or_default(),
            s.eta.unwrap_or_default(),
            solver,
        ),
        EstimatorKind::Tikhonov => {
            let prior = est.prior.as_ref().ok_or_else(|| {
                Error::validation("prior", "the TIKHONOV estimator needs a prior matrix")
            })?;
            estimate_tikhonov(cov, prior, s.nu.unwrap_or_default(), solver)
        }
    }
}

/// Strides `traj` and runs every estimator on the shared cross-correlations.
///
/// The outer error covers problems with the data itself (too few samples);
/// per-estimator failures are returned individually.
pub fn estimate_all(
    traj: &Trajectory,
    estimators: &[PreparedEstimator],
    options: &EstimateOptions,
) -> Result<Vec<Result<Estimate>>> {
    let strided = subsample(traj, options.stride)?;
    require_samples(&strided)?;
    let cov = covariances(&strided)?;
    let n_gen = strided.n_gen();
    Ok(estimators
        .iter()
        .map(|est| {
            let mut result = run_one(est, &strided, &cov, &options.solver)?;
            if options.threshold {
                result.a_hat = threshold_structure(&result.a_hat, n_gen);
            }
            if options.estimate_b {
                result.b_hat = Some(estimate_b(&strided, &result.a_hat)?);
            }
            let a_d_hat = to_continuous(&result.a_hat, strided.dt())?;
            Ok(Estimate {
                label: est.label(),
                result,
                thresholded: options.threshold,
                a_d_hat,
                dt: strided.dt(),
                n_samples: strided.len(),
            })
        })
        .collect())
}

/// One cell of a sweep table; `eps` carries the failure message when the
/// cell failed.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis_value: f64,
    pub estimator: String,
    pub seed: u64,
    pub eps: std::result::Result<f64, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepMean {
    pub axis_value: f64,
    pub estimator: String,
    pub mean_eps: Option<f64>,
    pub n_ok: usize,
    pub n_failed: usize,
}

fn cell_rows(
    truth: &Truth,
    traj: &Trajectory,
    axis_value: f64,
    seed: u64,
    estimators: &[PreparedEstimator],
    options: &EstimateOptions,
) -> Vec<SweepRow> {
    let row = |label: String, eps| SweepRow {
        axis_value,
        estimator: label,
        seed,
        eps,
    };
    match estimate_all(traj, estimators, options) {
        Err(e) => estimators
            .iter()
            .map(|est| row(est.label(), Err(e.to_string())))
            .collect(),
        Ok(estimates) => estimators
            .iter()
            .zip(estimates)
            .map(|(est, outcome)| {
                let eps = outcome
                    .and_then(|e| relative_error(&e.a_d_hat, &truth.continuous.a_d))
                    .map_err(|e| e.to_string());
                row(est.label(), eps)
            })
            .collect(),
    }
}

/// Runs simulate → estimate → relative error for every (axis value, seed)
/// cell of the configured sweep.
///
/// Each seed is simulated once at the longest window; shorter windows are
/// prefixes of it and coarser steps are subsamples of it. Failed cells are
/// recorded rather than aborting. Rows are sorted by (axis value,
/// estimator, seed).
pub fn run_sweep(
    truth: &Truth,
    config: &ExperimentConfig,
    estimators: &[PreparedEstimator],
) -> Result<Vec<SweepRow>> {
    let sweep = config
        .sweep
        .as_ref()
        .ok_or_else(|| Error::validation("sweep", "the config has no [sweep] section"))?;
    let g = &config.generation;
    let base_options = EstimateOptions {
        stride: config.estimation.stride,
        threshold: config.estimation.threshold,
        estimate_b: false,
        solver: config.estimation.solver.clone(),
    };
    let longest = match sweep.variable {
        SweepVariable::TObs => sweep
            .values
            .iter()
            .map(|&v| samples_in(v, g.dt_base))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .max()
            .unwrap_or(0),
        SweepVariable::Stride => samples_in(g.t_obs, g.dt_base)?,
    };

    let per_seed: Vec<Result<Vec<SweepRow>>> = g
        .seeds
        .par_iter()
        .map(|&seed| {
            let full = generate(&truth.discrete, longest, seed, g.burn_in)?;
            let mut rows = Vec::new();
            for &value in &sweep.values {
                let (traj, options) = match sweep.variable {
                    SweepVariable::TObs => (
                        full.truncated(samples_in(value, g.dt_base)?)?,
                        base_options.clone(),
                    ),
                    SweepVariable::Stride => (
                        full.clone(),
                        EstimateOptions {
                            stride: value as usize,
                            ..base_options.clone()
                        },
                    ),
                };
                rows.extend(cell_rows(truth, &traj, value, seed, estimators, &options));
            }
            Ok(rows)
        })
        .collect();

    let mut rows = Vec::new();
    for r in per_seed {
        rows.extend(r?);
    }
    rows.sort_by(|a, b| {
        a.axis_value
            .total_cmp(&b.axis_value)
            .then_with(|| a.estimator.cmp(&b.estimator))
            .then_with(|| a.seed.cmp(&b.seed))
    });
    Ok(rows)
}

/// Means over seeds of the successful cells, in row order.
pub fn sweep_means(rows: &[SweepRow]) -> Vec<SweepMean> {
    let mut out: Vec<(SweepMean, CompensatedSum)> = Vec::new();
    for r in rows {
        let fresh = match out.last() {
            Some((m, _)) => m.axis_value != r.axis_value || m.estimator != r.estimator,
            None => true,
        };
        if fresh {
            out.push((
                SweepMean {
                    axis_value: r.axis_value,
                    estimator: r.estimator.clone(),
                    mean_eps: None,
                    n_ok: 0,
                    n_failed: 0,
                },
                CompensatedSum::default(),
            ));
        }
        let (m, sum) = out.last_mut().expect("pushed above");
        match r.eps {
            Ok(e) => {
                sum.add(e);
                m.n_ok += 1;
            }
            Err(_) => m.n_failed += 1,
        }
    }
    out.into_iter()
        .map(|(mut m, sum)| {
            m.mean_eps = (sum.count() > 0).then(|| sum.mean());
            m
        })
        .collect()
}

/// `axis_value,estimator,seed,eps` with `failed` in place of `eps` for
/// failed cells.
pub fn format_sweep_table(rows: &[SweepRow]) -> String {
    let mut out = String::from("axis_value,estimator,seed,eps\n");
    for r in rows {
        match &r.eps {
            Ok(e) => writeln!(out, "{},{},{},{}", r.axis_value, r.estimator, r.seed, e),
            Err(_) => writeln!(out, "{},{},{},failed", r.axis_value, r.estimator, r.seed),
        }
        .expect("writing to a String");
    }
    out
}

/// `axis_value,estimator,mean_eps,n_ok,n_failed`.
pub fn format_mean_table(means: &[SweepMean]) -> String {
    let mut out = String::from("axis_value,estimator,mean_eps,n_ok,n_failed\n");
    for m in means {
        let mean = m
            .mean_eps
            .map_or_else(|| "failed".to_string(), |v| v.to_string());
        writeln!(
            out,
            "{},{},{},{},{}",
            m.axis_value, m.estimator, mean, m.n_ok, m.n_failed
        )
        .expect("writing to a String");
    }
    out
}
