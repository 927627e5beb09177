//! Stochastic simulation of the discrete swing dynamics and PMU-style resampling.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{check_dt, DiscreteSystem};
use crate::rng::{self, StreamRng};

/// Sampled state trajectory. Column `t` of `states` is `X_t = [δ, ω]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    n_gen: usize,
    dt: f64,
    states: DMatrix<f64>,
    seed: Option<u64>,
}

impl Trajectory {
    pub fn new(n_gen: usize, dt: f64, states: DMatrix<f64>, seed: Option<u64>) -> Result<Self> {
        if n_gen == 0 {
            return Err(Error::validation("n_gen", "must be at least 1"));
        }
        check_dt(dt)?;
        if states.nrows() != 2 * n_gen {
            return Err(Error::dimension(
                "trajectory state vector",
                2 * n_gen,
                states.nrows(),
            ));
        }
        if states.ncols() == 0 {
            return Err(Error::validation(
                "states",
                "trajectory must contain at least one sample",
            ));
        }
        if states.iter().any(|x| !x.is_finite()) {
            return Err(Error::validation(
                "states",
                "trajectory contains non-finite values",
            ));
        }
        Ok(Trajectory {
            n_gen,
            dt,
            states,
            seed,
        })
    }

    pub fn n_gen(&self) -> usize {
        self.n_gen
    }

    pub fn dim(&self) -> usize {
        2 * self.n_gen
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of samples `T`.
    pub fn len(&self) -> usize {
        self.states.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.states.ncols() == 0
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn states(&self) -> &DMatrix<f64> {
        &self.states
    }

    pub fn state(&self, t: usize) -> DVector<f64> {
        self.states.column(t).into_owned()
    }

    /// Observation window `T·Δt`.
    pub fn duration(&self) -> f64 {
        self.len() as f64 * self.dt
    }

    /// The first `len` samples.
    pub fn truncated(&self, len: usize) -> Result<Trajectory> {
        if len == 0 || len > self.len() {
            return Err(Error::validation(
                "len",
                format!(
                    "cannot truncate a {}-sample trajectory to {len}",
                    self.len()
                ),
            ));
        }
        Ok(Trajectory {
            n_gen: self.n_gen,
            dt: self.dt,
            states: self.states.columns(0, len).into_owned(),
            seed: self.seed,
        })
    }
}

struct Stepper<'a> {
    sys: &'a DiscreteSystem,
    rng: StreamRng,
    noise: DVector<f64>,
}

impl<'a> Stepper<'a> {
    fn new(sys: &'a DiscreteSystem, seed: u64) -> Self {
        Stepper {
            sys,
            rng: rng::stream(seed),
            noise: DVector::zeros(sys.dim()),
        }
    }

    /// `next = A·current + b∘ξ`, drawing all 2N normals every step.
    fn step(&mut self, current: &DVector<f64>, next: &mut DVector<f64>) {
        for (i, xi) in self.noise.iter_mut().enumerate() {
            *xi = self.sys.b_diag[i] * rng::standard_normal(&mut self.rng);
        }
        next.copy_from(&self.noise);
        next.gemv(1.0, &self.sys.a, current, 1.0);
    }
}

/// Runs `n_steps` steps of the discrete dynamics from `x0`.
///
/// Returns `n_steps + 1` samples, the first being `x0`.
pub fn simulate(
    sys: &DiscreteSystem,
    n_steps: usize,
    x0: &DVector<f64>,
    seed: u64,
) -> Result<Trajectory> {
    if n_steps == 0 {
        return Err(Error::validation("n_steps", "must be at least 1"));
    }
    if x0.len() != sys.dim() {
        return Err(Error::dimension("initial state", sys.dim(), x0.len()));
    }
    let mut states = DMatrix::zeros(sys.dim(), n_steps + 1);
    states.set_column(0, x0);
    let mut stepper = Stepper::new(sys, seed);
    let mut current = x0.clone();
    let mut next = DVector::zeros(sys.dim());
    for t in 1..=n_steps {
        stepper.step(&current, &mut next);
        states.set_column(t, &next);
        std::mem::swap(&mut current, &mut next);
    }
    Trajectory::new(sys.n_gen, sys.dt, states, Some(seed))
}

/// Keeps every `stride`-th sample starting at index 0.
pub fn subsample(traj: &Trajectory, stride: usize) -> Result<Trajectory> {
    if stride == 0 {
        return Err(Error::validation("stride", "must be at least 1"));
    }
    if stride == 1 {
        return Ok(traj.clone());
    }
    let idx: Vec<usize> = (0..traj.len()).step_by(stride).collect();
    Ok(Trajectory {
        n_gen: traj.n_gen,
        dt: traj.dt * stride as f64,
        states: traj.states.select_columns(&idx),
        seed: traj.seed,
    })
}

/// Eigenvalues of `A` within this distance of 1 are treated as the
/// Laplacian zero mode (a pure random walk of the mean angle).
const UNIT_MODE_TOL: f64 = 1e-9;

fn non_unit_moduli(sys: &DiscreteSystem) -> Result<Vec<f64>> {
    let eigs = crate::linalg::complex_eigenvalues(&sys.a)?;
    Ok(eigs
        .iter()
        .filter(|l| (*l - num_complex::Complex64::new(1.0, 0.0)).norm() > UNIT_MODE_TOL)
        .map(|l| l.norm())
        .collect())
}

/// Burn-in length: twice the slowest decaying mode's time constant (in
/// steps), rounded up. Zero when every mode is the unit mode.
pub fn default_burn_in(sys: &DiscreteSystem) -> Result<usize> {
    let moduli = non_unit_moduli(sys)?;
    let slowest = moduli.iter().cloned().fold(0.0_f64, f64::max);
    if slowest >= 1.0 {
        return Err(unstable(slowest));
    }
    if slowest == 0.0 {
        return Ok(0);
    }
    let tau = -1.0 / slowest.ln();
    Ok((2.0 * tau).ceil() as usize)
}

fn unstable(radius: f64) -> Error {
    Error::validation(
        "dynamics",
        format!("non-zero-mode spectral radius {radius} is not below 1; no stationary regime"),
    )
}

/// Final state of a `burn_in`-step run started at the origin.
pub fn steady_start(sys: &DiscreteSystem, burn_in: usize, seed: u64) -> Result<DVector<f64>> {
    let radius = non_unit_moduli(sys)?.into_iter().fold(0.0_f64, f64::max);
    if radius >= 1.0 {
        return Err(unstable(radius));
    }
    let mut current = DVector::zeros(sys.dim());
    let mut next = DVector::zeros(sys.dim());
    let mut stepper = Stepper::new(sys, seed);
    for _ in 0..burn_in {
        stepper.step(&current, &mut next);
        std::mem::swap(&mut current, &mut next);
    }
    Ok(current)
}

/// Simulates `n_samples` samples after a default-length burn-in.
///
/// The burn-in uses a seed derived from `seed`, so the returned trajectory
/// is a deterministic function of `(sys, n_samples, seed)`.
pub fn simulate_stationary(
    sys: &DiscreteSystem,
    n_samples: usize,
    seed: u64,
) -> Result<Trajectory> {
    if n_samples < 2 {
        return Err(Error::validation("n_samples", "must be at least 2"));
    }
    let burn_in = default_burn_in(sys)?;
    let x0 = steady_start(sys, burn_in, rng::derive_seed(seed, u64::MAX))?;
    simulate(sys, n_samples - 1, &x0, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::CompensatedSum;
    use crate::model::{build_discrete, Generator, GridModel};

    fn one_gen(sigma: f64) -> DiscreteSystem {
        let m = GridModel::new(
            1,
            vec![Generator {
                node: 0,
                inertia: 1.0,
                damping: 1.0,
                sigma_p: sigma,
            }],
            vec![],
        )
        .unwrap();
        build_discrete(&m.continuous_system().unwrap(), 1.0 / 60.0).unwrap()
    }

    #[test]
    fn noiseless_identity_is_constant() {
        let sys = DiscreteSystem::new(2, DMatrix::identity(4, 4), DVector::zeros(4), 0.1).unwrap();
        let x0 = DVector::from_vec(vec![1.0, -2.0, 3.0, 0.5]);
        let traj = simulate(&sys, 10, &x0, 3).unwrap();
        assert_eq!(traj.len(), 11);
        for t in 0..traj.len() {
            assert_eq!(traj.state(t), x0);
        }
    }

    #[test]
    fn one_noiseless_step() {
        let sys = one_gen(0.0);
        let traj = simulate(&sys, 1, &DVector::from_vec(vec![0.0, 1.0]), 0).unwrap();
        let x1 = traj.state(1);
        assert!((x1[0] - 1.0 / 60.0).abs() < 1e-16);
        assert!((x1[1] - 59.0 / 60.0).abs() < 1e-15);
    }

    #[test]
    fn noiseless_run_matches_matrix_powers() {
        let sys = one_gen(0.0);
        let x0 = DVector::from_vec(vec![0.3, -1.0]);
        let traj = simulate(&sys, 5, &x0, 0).unwrap();
        let mut x = x0.clone();
        for t in 0..=5 {
            assert_eq!(traj.state(t), x);
            x = &sys.a * x;
        }
    }

    #[test]
    fn seeded_runs_are_bit_identical() {
        let sys = one_gen(0.01);
        let x0 = DVector::zeros(2);
        let a = simulate(&sys, 500, &x0, 99).unwrap();
        let b = simulate(&sys, 500, &x0, 99).unwrap();
        assert_eq!(a.states(), b.states());
        let c = simulate(&sys, 500, &x0, 100).unwrap();
        assert_ne!(a.states(), c.states());
    }

    #[test]
    fn noise_only_enters_speed_rows() {
        let sys = one_gen(0.5);
        let traj = simulate(&sys, 200, &DVector::from_vec(vec![0.1, 0.2]), 5).unwrap();
        for t in 0..traj.len() - 1 {
            let r = traj.state(t + 1) - &sys.a * traj.state(t);
            assert_eq!(r[0], 0.0);
        }
    }

    #[test]
    fn simulate_rejects_bad_input() {
        let sys = one_gen(0.0);
        assert!(simulate(&sys, 0, &DVector::zeros(2), 0).is_err());
        assert!(matches!(
            simulate(&sys, 3, &DVector::zeros(3), 0),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn subsample_keeps_every_kth() {
        let states = DMatrix::from_fn(2, 7, |_, c| c as f64);
        let traj = Trajectory::new(1, 1.0 / 60.0, states, None).unwrap();
        assert_eq!(subsample(&traj, 1).unwrap(), traj);
        let s = subsample(&traj, 3).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(
            s.states().row(0).iter().cloned().collect::<Vec<_>>(),
            vec![0.0, 3.0, 6.0]
        );
        assert!((s.dt() - 3.0 / 60.0).abs() < 1e-17);
        assert!(subsample(&traj, 0).is_err());
    }

    #[test]
    fn steady_start_trivial_cases() {
        let sys = one_gen(0.0);
        assert_eq!(steady_start(&sys, 100, 1).unwrap(), DVector::zeros(2));
        let noisy = one_gen(0.01);
        assert_eq!(steady_start(&noisy, 0, 1).unwrap(), DVector::zeros(2));
    }

    #[test]
    fn steady_start_rejects_unstable_dynamics() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.5]);
        let sys = DiscreteSystem::new(1, a, DVector::from_vec(vec![0.0, 1.0]), 0.1).unwrap();
        assert!(steady_start(&sys, 10, 0).is_err());
    }

    #[test]
    fn default_burn_in_tracks_slowest_mode() {
        // Speed mode decays as (59/60)^t: time constant -1/ln(59/60) ≈ 59.5 steps.
        let sys = one_gen(0.01);
        assert_eq!(default_burn_in(&sys).unwrap(), 119);
    }

    #[test]
    fn stationary_speed_variance_matches_ar1() {
        // The speed coordinate of the 1-generator system is a scalar AR(1)
        // recursion w' = a w + b ξ with stationary variance b²/(1 − a²).
        let sys = one_gen(0.2);
        let a = sys.a[(1, 1)];
        let b = sys.b_diag[1];
        let expected = b * b / (1.0 - a * a);
        let n = 4000;
        let burn = 2000;
        let var: CompensatedSum = (0..n)
            .map(|s| {
                let x = steady_start(&sys, burn, s as u64).unwrap();
                x[1] * x[1]
            })
            .collect();
        // Standard error of a mean of squared normals: sqrt(2/n) relative.
        let rel = (var.mean() - expected).abs() / expected;
        assert!(
            rel < 5.0 * (2.0 / n as f64).sqrt(),
            "relative deviation {rel}"
        );
    }

    #[test]
    fn one_step_residuals_have_zero_mean() {
        let sys = one_gen(0.1);
        let x0 = DVector::from_vec(vec![0.5, -0.3]);
        let n_seeds = 2000;
        let residuals: Vec<f64> = (0..n_seeds)
            .map(|s| {
                let traj = simulate(&sys, 1, &x0, s).unwrap();
                (traj.state(1) - &sys.a * &x0)[1]
            })
            .collect();
        let mean: CompensatedSum = residuals.iter().cloned().collect();
        let se = sys.b_diag[1] / (n_seeds as f64).sqrt();
        assert!(mean.mean().abs() < 5.0 * se);
    }

    #[test]
    fn trajectory_invariants() {
        assert!(Trajectory::new(1, 0.0, DMatrix::zeros(2, 3), None).is_err());
        assert!(Trajectory::new(1, 0.1, DMatrix::zeros(3, 3), None).is_err());
        assert!(Trajectory::new(1, 0.1, DMatrix::zeros(2, 0), None).is_err());
        let mut bad = DMatrix::zeros(2, 2);
        bad[(0, 1)] = f64::NAN;
        assert!(Trajectory::new(1, 0.1, bad, None).is_err());
    }
}
