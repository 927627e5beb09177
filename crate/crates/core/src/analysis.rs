//! Continuous-time recovery, error metrics, finite-sample bounds and spectra.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::covariances;
use crate::linalg::{complex_eigenvalues, spd_condition_number, CompensatedSum};
use crate::model::{check_dt, DiscreteSystem};
use crate::rng::derive_seed;
use crate::sim::simulate_stationary;

/// `(Â − I)/Δt`.
pub fn to_continuous(a_hat: &DMatrix<f64>, dt: f64) -> Result<DMatrix<f64>> {
    check_dt(dt)?;
    if !a_hat.is_square() {
        return Err(Error::dimension(
            "square matrix",
            a_hat.nrows(),
            a_hat.ncols(),
        ));
    }
    let n = a_hat.nrows();
    Ok((a_hat - DMatrix::identity(n, n)) / dt)
}

/// `‖â − a‖_F / ‖a‖_F`.
pub fn relative_error(estimate: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<f64> {
    if estimate.shape() != truth.shape() {
        return Err(Error::dimension(
            "estimate vs reference",
            truth.nrows() * truth.ncols(),
            estimate.nrows() * estimate.ncols(),
        ));
    }
    let denom = truth.norm();
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::validation(
            "reference",
            "reference matrix must have a finite nonzero norm",
        ));
    }
    Ok((estimate - truth).norm() / denom)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundKind {
    /// Error on the one-step matrix `A`.
    #[serde(rename = "DISCRETE")]
    Discrete,
    /// Error on the continuous matrix `A_d`.
    #[serde(rename = "CONTINUOUS")]
    Continuous,
}

/// A high-probability error bound together with the Monte Carlo
/// expectations it was built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub which: BoundKind,
    pub epsilon: f64,
    pub rhs: f64,
    /// Estimate of `E[Tr Σ₀]`.
    pub trace_sigma0_mean: f64,
    /// Estimate of `E[‖Σ₀⁻¹‖_F²]`.
    pub inv_norm_mean: f64,
    /// Trials that entered the means.
    pub n_trials: usize,
    /// Trials dropped because `Σ₀` was numerically singular.
    pub discarded: usize,
    /// Number of samples per trial.
    pub n_samples: usize,
}

const TRIAL_CONDITION_LIMIT: f64 = 1e12;

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon < 1.0 {
        Ok(())
    } else {
        Err(Error::validation(
            "epsilon",
            format!("must lie in (0, 1), got {epsilon}"),
        ))
    }
}

fn check_samples(n_samples: usize, dim: usize) -> Result<()> {
    if n_samples <= dim + 2 {
        return Err(Error::SampleDeficit {
            available: n_samples,
            required: dim + 2,
            context: "bound evaluation".into(),
        });
    }
    Ok(())
}

/// With probability at least `1 − ε`,
/// `‖Â − A‖_F ≤ ‖B‖₂/(ε√(T−1)) · sqrt(E[Tr Σ₀]·E[‖Σ₀⁻¹‖_F²])`.
///
/// The expectations are Monte Carlo means over `n_trials` stationary
/// trajectories with seeds `derive_seed(seed, k)`. For `B = 0` the bound is
/// zero and no trials are run (the means are reported as `0` and `inf`).
pub fn theorem1_bound(
    sys: &DiscreteSystem,
    n_samples: usize,
    epsilon: f64,
    n_trials: usize,
    seed: u64,
) -> Result<BoundReport> {
    check_epsilon(epsilon)?;
    check_samples(n_samples, sys.dim())?;
    if n_trials == 0 {
        return Err(Error::validation("n_trials", "must be at least 1"));
    }
    let b_norm = sys.b_norm();
    if b_norm == 0.0 {
        return Ok(BoundReport {
            which: BoundKind::Discrete,
            epsilon,
            rhs: 0.0,
            trace_sigma0_mean: 0.0,
            inv_norm_mean: f64::INFINITY,
            n_trials: 0,
            discarded: 0,
            n_samples,
        });
    }

    let trials: Vec<Result<Option<(f64, f64)>>> = (0..n_trials as u64)
        .into_par_iter()
        .map(|k| {
            let traj = simulate_stationary(sys, n_samples, derive_seed(seed, k))?;
            let sigma0 = covariances(&traj)?.sigma0;
            if spd_condition_number(&sigma0) > TRIAL_CONDITION_LIMIT {
                return Ok(None);
            }
            let inverse = match sigma0.clone().cholesky() {
                Some(chol) => chol.inverse(),
                None => return Ok(None),
            };
            Ok(Some((sigma0.trace(), inverse.norm_squared())))
        })
        .collect();

    // Summed in trial order so the means do not depend on scheduling.
    let mut trace = CompensatedSum::default();
    let mut inv = CompensatedSum::default();
    let mut discarded = 0;
    for trial in trials {
        match trial? {
            Some((t, i)) => {
                trace.add(t);
                inv.add(i);
            }
            None => discarded += 1,
        }
    }
    if trace.count() == 0 {
        return Err(Error::Singular(format!(
            "Σ₀ was singular in all {n_trials} trials with T = {n_samples}"
        )));
    }
    let (trace_mean, inv_mean) = (trace.mean(), inv.mean());
    let rhs = b_norm / (epsilon * ((n_samples - 1) as f64).sqrt()) * (trace_mean * inv_mean).sqrt();
    Ok(BoundReport {
        which: BoundKind::Discrete,
        epsilon,
        rhs,
        trace_sigma0_mean: trace_mean,
        inv_norm_mean: inv_mean,
        n_trials: trace.count(),
        discarded,
        n_samples,
    })
}

/// Bound on `‖Â_d − A_d‖_F`:
/// `ε⁻¹·sqrt(Σ_i σ_{P_i}²/M_i² / (Δt(T−1)) · E[Tr Σ₀]·E[‖Σ₀⁻¹‖_F²])`,
/// reusing the expectations of a [`theorem1_bound`] report.
pub fn corollary2_bound(
    inertia: &[f64],
    sigma_p: &[f64],
    dt: f64,
    epsilon: f64,
    expectations: &BoundReport,
) -> Result<BoundReport> {
    check_epsilon(epsilon)?;
    check_dt(dt)?;
    if inertia.len() != sigma_p.len() {
        return Err(Error::dimension(
            "inertia vs sigma_P",
            inertia.len(),
            sigma_p.len(),
        ));
    }
    if inertia.iter().any(|m| !(*m > 0.0 && m.is_finite())) {
        return Err(Error::validation("M", "inertia must be positive"));
    }
    if expectations.n_samples < 2 {
        return Err(Error::validation("n_samples", "must be at least 2"));
    }
    let noise: f64 = inertia
        .iter()
        .zip(sigma_p)
        .map(|(m, s)| (s / m).powi(2))
        .sum();
    let rhs = if noise == 0.0 {
        0.0
    } else {
        let horizon = dt * (expectations.n_samples - 1) as f64;
        (noise / horizon * expectations.trace_sigma0_mean * expectations.inv_norm_mean).sqrt()
            / epsilon
    };
    Ok(BoundReport {
        which: BoundKind::Continuous,
        epsilon,
        rhs,
        ..expectations.clone()
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralReport {
    pub eigenvalues: Vec<Complex64>,
    /// Non-zero-mode eigenvalue with the largest real part, followed by its
    /// conjugate partner when it is complex.
    pub critical: Vec<Complex64>,
    pub zero_mode_tol: f64,
}

pub fn spectral_radius(eigenvalues: &[Complex64]) -> f64 {
    eigenvalues.iter().map(|l| l.norm()).fold(0.0, f64::max)
}

/// Eigenvalues of a continuous-time matrix and its critical mode(s).
///
/// Eigenvalues with modulus at most `zero_mode_tol` are treated as the
/// structural zero mode and never reported as critical. The default
/// tolerance is `1e-6` times the spectral radius.
pub fn spectrum(a_d: &DMatrix<f64>, zero_mode_tol: Option<f64>) -> Result<SpectralReport> {
    if !a_d.is_square() {
        return Err(Error::dimension("square matrix", a_d.nrows(), a_d.ncols()));
    }
    let eigenvalues = complex_eigenvalues(a_d)?;
    let tol = match zero_mode_tol {
        Some(t) if t >= 0.0 && t.is_finite() => t,
        Some(t) => {
            return Err(Error::validation(
                "zero_mode_tol",
                format!("must be nonnegative, got {t}"),
            ))
        }
        None => 1e-6 * spectral_radius(&eigenvalues),
    };
    let mut critical = Vec::new();
    let lead = eigenvalues
        .iter()
        .filter(|l| l.norm() > tol)
        .max_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)))
        .copied();
    if let Some(lead) = lead {
        critical.push(lead);
        if lead.im != 0.0 {
            let partner = eigenvalues
                .iter()
                .filter(|l| l.im * lead.im < 0.0)
                .min_by(|a, b| {
                    (**a - lead.conj())
                        .norm()
                        .total_cmp(&(**b - lead.conj()).norm())
                });
            if let Some(p) = partner {
                critical.push(*p);
            }
        }
    }
    Ok(SpectralReport {
        eigenvalues,
        critical,
        zero_mode_tol: tol,
    })
}

/// Minimum-cost perfect matching between two eigenvalue lists under
/// `|a − b|`: entry `i` is the index in `b` paired with `a[i]`.
pub fn match_spectra(a: &[Complex64], b: &[Complex64]) -> Result<Vec<usize>> {
    if a.len() != b.len() {
        return Err(Error::dimension("eigenvalue lists", a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::validation("eigenvalues", "cannot match empty lists"));
    }
    let cost = DMatrix::from_fn(a.len(), b.len(), |i, j| (a[i] - b[j]).norm());
    Ok(min_cost_assignment(&cost))
}

/// Mean distance of the minimum-cost perfect matching between two
/// eigenvalue lists under `|a − b|`.
pub fn spectral_distance(a: &[Complex64], b: &[Complex64]) -> Result<f64> {
    let total: CompensatedSum = match_spectra(a, b)?
        .into_iter()
        .enumerate()
        .map(|(i, j)| (a[i] - b[j]).norm())
        .collect();
    Ok(total.mean())
}

/// Hungarian algorithm (shortest augmenting paths with potentials) for a
/// square cost matrix. Returns the column assigned to each row.
fn min_cost_assignment(cost: &DMatrix<f64>) -> Vec<usize> {
    let n = cost.nrows();
    // 1-based arrays; index 0 is the virtual start column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[row_of[j] - 1] = j - 1;
    }
    assignment
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;
    use crate::model::{build_discrete, Generator, GridModel, Line};
    use crate::rng::{standard_normal, stream};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn two_generator() -> GridModel {
        let gen = |node| Generator {
            node,
            inertia: 1.0,
            damping: 1.0,
            sigma_p: 0.01,
        };
        GridModel::new(
            2,
            vec![gen(0), gen(1)],
            vec![Line {
                from: 0,
                to: 1,
                beta: 1.0,
                gamma: None,
            }],
        )
        .unwrap()
    }

    #[test]
    fn to_continuous_examples() {
        let dt = 0.05;
        assert_eq!(
            to_continuous(&DMatrix::identity(4, 4), dt).unwrap(),
            DMatrix::zeros(4, 4)
        );
        let cont = two_generator().continuous_system().unwrap();
        let disc = build_discrete(&cont, dt).unwrap();
        let back = to_continuous(&disc.a, dt).unwrap();
        assert!(max_abs_diff(&back, &cont.a_d) < 1e-12);
        assert!(to_continuous(&DMatrix::identity(2, 2), 0.0).is_err());
    }

    #[test]
    fn relative_error_examples() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -3.0, 0.5]);
        assert_eq!(relative_error(&a, &a).unwrap(), 0.0);
        assert_eq!(relative_error(&DMatrix::zeros(2, 2), &a).unwrap(), 1.0);
        assert!((relative_error(&(&a * 2.0), &a).unwrap() - 1.0).abs() < 1e-15);
        assert!(relative_error(&a, &DMatrix::zeros(2, 2)).is_err());
        assert!(relative_error(&a, &DMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn triangular_spectrum() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, -1.0]);
        let r = spectrum(&a, None).unwrap();
        let mut re: Vec<f64> = r.eigenvalues.iter().map(|l| l.re).collect();
        re.sort_by(f64::total_cmp);
        assert_eq!(re, vec![-1.0, 0.0]);
        assert_eq!(r.critical, vec![c(-1.0, 0.0)]);
    }

    #[test]
    fn symmetric_pair_spectrum() {
        let a_d = two_generator().continuous_system().unwrap().a_d;
        let r = spectrum(&a_d, None).unwrap();
        assert_eq!(r.eigenvalues.len(), 4);
        let root = 7.0_f64.sqrt() / 2.0;
        let expected = [c(0.0, 0.0), c(-1.0, 0.0), c(-0.5, root), c(-0.5, -root)];
        assert!(spectral_distance(&r.eigenvalues, &expected).unwrap() < 1e-12);
        assert_eq!(r.critical.len(), 2);
        for l in &r.critical {
            assert!((l.re + 0.5).abs() < 1e-12 && (l.im.abs() - root).abs() < 1e-12);
        }
        assert!((r.critical[0].im + r.critical[1].im).abs() < 1e-12);
    }

    #[test]
    fn spectral_distance_examples() {
        let a = [c(0.0, 0.0), c(-1.0, 0.0)];
        assert_eq!(spectral_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(spectral_distance(&a, &[a[1], a[0]]).unwrap(), 0.0);
        let d = spectral_distance(&a, &[c(0.0, 0.0), c(-1.1, 0.0)]).unwrap();
        assert!((d - 0.05).abs() < 1e-15);
        assert!(spectral_distance(&a, &a[..1]).is_err());
    }

    fn brute_force(cost: &DMatrix<f64>) -> f64 {
        fn go(cost: &DMatrix<f64>, row: usize, used: &mut Vec<bool>) -> f64 {
            if row == cost.nrows() {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for j in 0..cost.ncols() {
                if !used[j] {
                    used[j] = true;
                    best = best.min(cost[(row, j)] + go(cost, row + 1, used));
                    used[j] = false;
                }
            }
            best
        }
        go(cost, 0, &mut vec![false; cost.ncols()])
    }

    #[test]
    fn hungarian_matches_brute_force() {
        let mut rng = stream(11);
        for n in 1..=7 {
            for _ in 0..20 {
                let a: Vec<Complex64> = (0..n)
                    .map(|_| c(standard_normal(&mut rng), standard_normal(&mut rng)))
                    .collect();
                let b: Vec<Complex64> = (0..n)
                    .map(|_| c(standard_normal(&mut rng), standard_normal(&mut rng)))
                    .collect();
                let cost = DMatrix::from_fn(n, n, |i, j| (a[i] - b[j]).norm());
                let oracle = brute_force(&cost) / n as f64;
                let got = spectral_distance(&a, &b).unwrap();
                assert!((got - oracle).abs() < 1e-12, "n={n}: {got} vs {oracle}");
            }
        }
    }

    fn one_gen_system(sigma: f64) -> DiscreteSystem {
        let m = GridModel::new(
            1,
            vec![Generator {
                node: 0,
                inertia: 2.0,
                damping: 1.0,
                sigma_p: sigma,
            }],
            vec![],
        )
        .unwrap();
        build_discrete(&m.continuous_system().unwrap(), 0.05).unwrap()
    }

    #[test]
    fn noiseless_bound_is_zero() {
        let sys = one_gen_system(0.0);
        assert_eq!(theorem1_bound(&sys, 100, 0.1, 10, 1).unwrap().rhs, 0.0);
        let m = [1.0, 2.0];
        let report = theorem1_bound(&one_gen_system(0.01), 100, 0.1, 10, 1).unwrap();
        assert_eq!(
            corollary2_bound(&m, &[0.0, 0.0], 0.05, 0.1, &report)
                .unwrap()
                .rhs,
            0.0
        );
    }

    #[test]
    fn bound_scales_with_epsilon_and_b() {
        let sys = one_gen_system(0.01);
        let r1 = theorem1_bound(&sys, 200, 0.2, 20, 5).unwrap();
        let r2 = theorem1_bound(&sys, 200, 0.1, 20, 5).unwrap();
        assert_eq!(r1.trace_sigma0_mean, r2.trace_sigma0_mean);
        assert_eq!(r1.inv_norm_mean, r2.inv_norm_mean);
        assert_eq!(r2.rhs, 2.0 * r1.rhs);
        assert_eq!(r1.n_trials, 20);

        // Scaling B scales Σ₀ by k² and ‖Σ₀⁻¹‖² by k⁻⁴, so with fixed
        // expectations the rhs is linear in ‖B‖₂.
        let mut loud = sys.clone();
        loud.b_diag *= 3.0;
        let r3 = theorem1_bound(&loud, 200, 0.2, 20, 5).unwrap();
        let fixed = r3.rhs / 3.0 * (r1.trace_sigma0_mean * r1.inv_norm_mean).sqrt()
            / (r3.trace_sigma0_mean * r3.inv_norm_mean).sqrt();
        assert!((fixed - r1.rhs).abs() <= 1e-12 * r1.rhs);
    }

    #[test]
    fn corollary_is_theorem_over_dt_for_one_generator() {
        let sys = one_gen_system(0.01);
        let theorem = theorem1_bound(&sys, 300, 0.1, 30, 9).unwrap();
        let corollary = corollary2_bound(&[2.0], &[0.01], 0.05, 0.1, &theorem).unwrap();
        assert_eq!(corollary.which, BoundKind::Continuous);
        assert!((corollary.rhs - theorem.rhs / 0.05).abs() <= 1e-12 * corollary.rhs);
    }

    #[test]
    fn corollary_depends_only_on_horizon() {
        let base = BoundReport {
            which: BoundKind::Discrete,
            epsilon: 0.1,
            rhs: 1.0,
            trace_sigma0_mean: 2.0,
            inv_norm_mean: 3.0,
            n_trials: 1,
            discarded: 0,
            n_samples: 101,
        };
        let a = corollary2_bound(&[1.0], &[0.1], 0.1, 0.1, &base).unwrap();
        let b = corollary2_bound(
            &[1.0],
            &[0.1],
            0.05,
            0.1,
            &BoundReport {
                n_samples: 201,
                ..base.clone()
            },
        )
        .unwrap();
        assert!((a.rhs - b.rhs).abs() <= 1e-15 * a.rhs);
    }

    #[test]
    fn bound_validates_inputs() {
        let sys = one_gen_system(0.01);
        assert!(theorem1_bound(&sys, 100, 1.0, 10, 1).is_err());
        assert!(theorem1_bound(&sys, 100, 0.0, 10, 1).is_err());
        assert!(matches!(
            theorem1_bound(&sys, 4, 0.1, 10, 1),
            Err(Error::SampleDeficit { .. })
        ));
        assert!(theorem1_bound(&sys, 100, 0.1, 0, 1).is_err());
    }

    #[test]
    fn bound_is_deterministic() {
        let sys = one_gen_system(0.01);
        let a = theorem1_bound(&sys, 150, 0.1, 16, 3).unwrap();
        let b = theorem1_bound(&sys, 150, 0.1, 16, 3).unwrap();
        assert_eq!(a, b);
    }
}
