//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use swingid::analysis::{spectral_distance, spectral_radius, spectrum, theorem1_bound};
use swingid::estimators::{
    covariances, estimate_b, estimate_lasso_from, estimate_sparse_low_rank_from, estimate_tikhonov,
    estimate_uml, estimate_uml_traj, CovariancePair, EstimatorKind, SolverConfig,
};
use swingid::fixture::ten_generator;
use swingid::io::{
    self, EigenRow, EstimationConfig, ExperimentConfig, GenerationConfig, SweepConfig,
    SweepVariable,
};
use swingid::linalg::{largest_symmetric_eigenvalue, CompensatedSum};
use swingid::model::{build_discrete, DiscreteSystem, Generator, GridModel, Line};
use swingid::pipeline::{
    estimate_all, generate, run_sweep, sweep_means, EstimateOptions, PreparedEstimator, Truth,
};
use swingid::rng::{standard_normal, stream};
use swingid::sim::{simulate, simulate_stationary};

const DT: f64 = 1.0 / 60.0;
const STRIDE: usize = 3;
const SEEDS: u64 = 50;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn fixture_truth() -> Truth {
    Truth::new(&ten_generator(), DT).unwrap()
}

/// Random stable VAR(1) instance with unit noise and `T = 300` samples.
fn random_var(seed: u64, n_gen: usize) -> (DMatrix<f64>, CovariancePair) {
    let dim = 2 * n_gen;
    let mut rng = stream(seed);
    let raw = DMatrix::from_fn(dim, dim, |_, _| standard_normal(&mut rng));
    let radius = raw
        .complex_eigenvalues()
        .iter()
        .map(|l| l.norm())
        .fold(0.0, f64::max);
    let a = raw * (0.8 / radius);
    let sys = DiscreteSystem::new(n_gen, a.clone(), DVector::from_element(dim, 1.0), 0.1).unwrap();
    let traj = simulate(&sys, 299, &DVector::zeros(dim), seed).unwrap();
    (a, covariances(&traj).unwrap())
}

fn criterion_1() -> Outcome {
    let truth = fixture_truth();
    let n = truth.n_gen();
    let structural = |a_hat: &DMatrix<f64>| {
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in 0..2 * n {
                let expected = if j == i {
                    1.0
                } else if j == i + n {
                    DT
                } else {
                    0.0
                };
                worst = worst.max((a_hat[(i, j)] - expected).abs());
            }
        }
        worst
    };
    let mut worst = 0.0_f64;
    for (seed, len) in [(1, 2 * n + 4), (2, 2 * n + 10), (3, 500), (4, 5000)] {
        let traj = simulate_stationary(&truth.discrete, len, seed).unwrap();
        let est = estimate_uml_traj(&traj, &SolverConfig::default()).unwrap();
        worst = worst.max(structural(&est.a_hat));
    }
    let traj = simulate_stationary(&truth.discrete, 12_000, 7).unwrap();
    let start = Instant::now();
    let est = estimate_uml_traj(&traj, &SolverConfig::default()).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    worst = worst.max(structural(&est.a_hat));
    outcome(
        worst <= 1e-10 && elapsed < 1.0,
        format!("max structural deviation {worst:.2e}; N=10, T=12000 estimate in {elapsed:.3} s"),
    )
}

fn criterion_2() -> Outcome {
    let mut worst = 0.0_f64;
    for k in 0..25u64 {
        let n_gen = 1 + (k % 4) as usize;
        let (_, cov) = random_var(100 + k, n_gen);
        let closed = estimate_uml(&cov, &SolverConfig::default()).unwrap().a_hat;
        let step = 1.0 / (2.0 * cov.transitions() * largest_symmetric_eigenvalue(&cov.sigma0));
        let mut a = DMatrix::zeros(cov.dim(), cov.dim());
        for _ in 0..200_000 {
            let g = cov.gradient(&a);
            if g.amax() * step < 1e-15 {
                break;
            }
            a -= g * step;
        }
        worst = worst.max((&a - &closed).norm());
    }
    outcome(
        worst <= 1e-6,
        format!("max Frobenius gap to gradient descent over 25 instances {worst:.2e}"),
    )
}

/// Mean relative errors of UML and CML over the fixture t_obs sweep.
struct SweepSummary {
    t_obs: Vec<f64>,
    uml: Vec<f64>,
    cml: Vec<f64>,
    failed: usize,
}

fn fixture_sweep() -> SweepSummary {
    let truth = fixture_truth();
    let t_obs = vec![60.0, 120.0, 300.0, 600.0, 900.0, 1200.0];
    let config = ExperimentConfig {
        model_path: "fixture".into(),
        outputs: "unused".into(),
        generation: GenerationConfig {
            dt_base: DT,
            t_obs: 600.0,
            burn_in: None,
            seeds: (1..=SEEDS).collect(),
        },
        estimation: EstimationConfig {
            stride: STRIDE,
            ..EstimationConfig::default()
        },
        sweep: Some(SweepConfig {
            variable: SweepVariable::TObs,
            values: t_obs.clone(),
        }),
    };
    let estimators = [
        PreparedEstimator::plain(EstimatorKind::Uml),
        PreparedEstimator::plain(EstimatorKind::Cml),
    ];
    let rows = run_sweep(&truth, &config, &estimators).unwrap();
    let failed = rows.iter().filter(|r| r.eps.is_err()).count();
    let means = sweep_means(&rows);
    let pick = |label: &str| -> Vec<f64> {
        t_obs
            .iter()
            .map(|t| {
                means
                    .iter()
                    .find(|m| m.axis_value == *t && m.estimator == label)
                    .and_then(|m| m.mean_eps)
                    .unwrap_or(f64::NAN)
            })
            .collect()
    };
    SweepSummary {
        uml: pick("UML"),
        cml: pick("CML"),
        t_obs,
        failed,
    }
}

fn at(s: &SweepSummary, series: &[f64], t: f64) -> f64 {
    series[s.t_obs.iter().position(|x| *x == t).unwrap()]
}

fn criterion_3(s: &SweepSummary) -> Outcome {
    let (e10, e20) = (at(s, &s.cml, 600.0), at(s, &s.cml, 1200.0));
    outcome(
        e10 <= 0.05 && e20 <= 0.035 && e20 < e10 && s.failed == 0,
        format!(
            "CML mean error {:.2}% at 10 min, {:.2}% at 20 min",
            100.0 * e10,
            100.0 * e20
        ),
    )
}

fn criterion_4(s: &SweepSummary) -> Outcome {
    let le = s.cml.iter().zip(&s.uml).all(|(c, u)| c <= u);
    let strict = s.cml.iter().zip(&s.uml).filter(|(c, u)| c < u).count();
    let pairs: Vec<String> = s
        .t_obs
        .iter()
        .zip(s.cml.iter().zip(&s.uml))
        .map(|(t, (c, u))| format!("{t}s {:.2}/{:.2}%", 100.0 * c, 100.0 * u))
        .collect();
    outcome(
        le && strict * 5 >= 4 * s.t_obs.len(),
        format!(
            "CML/UML {}; strict at {strict}/{}",
            pairs.join(", "),
            s.t_obs.len()
        ),
    )
}

fn criterion_5(s: &SweepSummary) -> Outcome {
    let ratio = at(s, &s.cml, 300.0) / at(s, &s.cml, 1200.0);
    let ratio_uml = at(s, &s.uml, 300.0) / at(s, &s.uml, 1200.0);
    outcome(
        (1.6..=2.6).contains(&ratio),
        format!("CML error ratio 5 min / 20 min = {ratio:.3} (UML {ratio_uml:.3})"),
    )
}

fn small_model(n_gen: usize) -> GridModel {
    let generators = (0..n_gen)
        .map(|node| Generator {
            node,
            inertia: 2.0 + node as f64,
            damping: 1.0,
            sigma_p: 0.01,
        })
        .collect();
    let lines = (1..n_gen)
        .map(|j| Line {
            from: j - 1,
            to: j,
            beta: 1.5,
            gamma: None,
        })
        .collect();
    GridModel::new(n_gen, generators, lines).unwrap()
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let mut details = Vec::new();
    let mut pass = true;
    for n_gen in [1, 3] {
        let sys = build_discrete(&small_model(n_gen).continuous_system().unwrap(), 0.05).unwrap();
        let t = 1000;
        let bound = theorem1_bound(&sys, t, 0.1, 500, 0xB0).unwrap();
        let mut exceed = 0;
        for seed in 0..500u64 {
            let traj = simulate_stationary(&sys, t, 10_000 + seed).unwrap();
            let est = estimate_uml(&covariances(&traj).unwrap(), &SolverConfig::default()).unwrap();
            if (&est.a_hat - &sys.a).norm() > bound.rhs {
                exceed += 1;
            }
        }
        let fraction = exceed as f64 / 500.0;
        pass &= fraction <= 0.1;
        details.push(format!(
            "N={n_gen}: rhs {:.3e}, exceeded in {:.1}%",
            bound.rhs,
            100.0 * fraction
        ));
    }
    let elapsed = start.elapsed().as_secs_f64();
    outcome(
        pass && elapsed < 60.0,
        format!("{} ({elapsed:.1} s)", details.join("; ")),
    )
}

fn criterion_7() -> Outcome {
    let truth = fixture_truth();
    let b = &truth.discrete.b_diag;
    let scale = b.amax();
    let mut worst = 0.0_f64;
    for seed in 1..=10 {
        let traj = generate(&truth.discrete, 36_000, seed, None).unwrap();
        let b_hat = estimate_b(&traj, &truth.discrete.a).unwrap();
        for (est, exact) in b_hat.iter().zip(b.iter()) {
            let dev = if *exact > 0.0 {
                (est - exact).abs() / exact
            } else {
                est.abs() / scale
            };
            worst = worst.max(dev);
        }
    }
    outcome(
        worst <= 0.05,
        format!(
            "worst relative deviation of b_hat over 10 seeds {:.2}%",
            100.0 * worst
        ),
    )
}

fn criterion_8() -> Outcome {
    let config = SolverConfig::default();
    let (_, cov) = random_var(77, 2);
    let uml = estimate_uml(&cov, &config).unwrap();
    let prior = DMatrix::from_fn(4, 4, |i, j| 0.1 * (i as f64) - 0.2 * (j as f64));

    let tik_small = estimate_tikhonov(&cov, &prior, 1e-9, &config).unwrap();
    let tik_gap = (&tik_small.a_hat - &uml.a_hat).amax();
    let tik_huge = estimate_tikhonov(&cov, &prior, 1e12 * cov.sigma0.trace(), &config).unwrap();
    let prior_gap = (&tik_huge.a_hat - &prior).norm() / prior.norm();

    let lasso0 = estimate_lasso_from(&cov, 0.0, &config).unwrap();
    let lasso_gap = (&lasso0.a_hat - &uml.a_hat).norm() / uml.a_hat.norm();

    let kill = 2.0 * cov.sigma1.amax() * cov.transitions();
    let killed = estimate_lasso_from(&cov, kill, &config).unwrap();
    let all_zero = killed.a_hat.iter().all(|x| *x == 0.0);

    let lambda = 0.05 * kill;
    let lasso = estimate_lasso_from(&cov, lambda, &config).unwrap();
    let slr = estimate_sparse_low_rank_from(&cov, lambda, 1e12, &config).unwrap();
    let slr_gap = (slr.objective - lasso.objective).abs() / lasso.objective;

    outcome(
        tik_gap <= 1e-8 && prior_gap <= 1e-6 && lasso_gap <= 1e-6 && all_zero && slr_gap <= 1e-6,
        format!(
            "Tikhonov nu->0 gap {tik_gap:.1e}, nu huge prior gap {prior_gap:.1e}, LASSO lambda=0 gap {lasso_gap:.1e}, \
             kill threshold zero={all_zero}, SLR vs LASSO objective gap {slr_gap:.1e}"
        ),
    )
}

fn criterion_9() -> Outcome {
    let truth = fixture_truth();
    let exact = spectrum(&truth.continuous.a_d, None).unwrap();
    let radius = spectral_radius(&exact.eigenvalues);
    let options = EstimateOptions {
        stride: STRIDE,
        ..EstimateOptions::default()
    };
    let cml = [PreparedEstimator::plain(EstimatorKind::Cml)];
    let distances: CompensatedSum = (1..=SEEDS)
        .map(|seed| {
            let traj = generate(&truth.discrete, 36_000, seed, None).unwrap();
            let est = estimate_all(&traj, &cml, &options)
                .unwrap()
                .remove(0)
                .unwrap();
            let eigs = spectrum(&est.a_d_hat, None).unwrap().eigenvalues;
            spectral_distance(&eigs, &exact.eigenvalues).unwrap()
        })
        .collect();
    let share = distances.mean() / radius;
    outcome(
        share <= 0.05,
        format!(
            "mean matched distance {:.2}% of spectral radius {radius:.3}",
            100.0 * share
        ),
    )
}

fn criterion_10() -> Outcome {
    let truth = fixture_truth();
    let dir = tempfile::tempdir().unwrap();
    let mut checks = Vec::new();

    let a = generate(&truth.discrete, 2000, 5, None).unwrap();
    let b = generate(&truth.discrete, 2000, 5, None).unwrap();
    checks.push(("trajectories", a.states() == b.states()));

    let options = EstimateOptions {
        stride: STRIDE,
        estimate_b: true,
        ..EstimateOptions::default()
    };
    let est = [
        PreparedEstimator::plain(EstimatorKind::Uml),
        PreparedEstimator::plain(EstimatorKind::Cml),
    ];
    let ra: Vec<_> = estimate_all(&a, &est, &options)
        .unwrap()
        .into_iter()
        .map(Result::unwrap)
        .collect();
    let rb: Vec<_> = estimate_all(&b, &est, &options)
        .unwrap()
        .into_iter()
        .map(Result::unwrap)
        .collect();
    checks.push(("estimates", ra == rb));

    let path = dir.path().join("traj.csv");
    io::save_trajectory(&path, &a).unwrap();
    let back = io::load_trajectory(&path).unwrap();
    checks.push((
        "trajectory file",
        back.states() == a.states() && back.dt() == a.dt(),
    ));

    let path = dir.path().join("grid.model");
    io::save_model(&path, &ten_generator()).unwrap();
    checks.push((
        "model file",
        io::load_model(&path).unwrap() == ten_generator(),
    ));

    let path = dir.path().join("a.csv");
    io::save_matrix(&path, &ra[0].result.a_hat).unwrap();
    checks.push((
        "matrix file",
        io::load_matrix(&path).unwrap() == ra[0].result.a_hat,
    ));

    let rows: Vec<EigenRow> = spectrum(&ra[1].a_d_hat, None)
        .unwrap()
        .eigenvalues
        .into_iter()
        .map(|value: Complex64| EigenRow {
            value,
            source: "estimate".into(),
        })
        .collect();
    let path = dir.path().join("eig.csv");
    io::save_eigen_table(&path, &rows).unwrap();
    checks.push(("eigen table", io::load_eigen_table(&path).unwrap() == rows));

    let bound = theorem1_bound(&truth.discrete, 200, 0.1, 8, 3).unwrap();
    let path = dir.path().join("bound.toml");
    io::save_bound_report(&path, &bound).unwrap();
    checks.push((
        "bound report",
        io::load_bound_report(&path).unwrap() == bound,
    ));

    let failed: Vec<&str> = checks
        .iter()
        .filter(|(_, ok)| !ok)
        .map(|(n, _)| *n)
        .collect();
    outcome(
        failed.is_empty(),
        if failed.is_empty() {
            format!(
                "{} determinism and round-trip checks identical",
                checks.len()
            )
        } else {
            format!("mismatch in: {}", failed.join(", "))
        },
    )
}

fn main() {
    let sweep = fixture_sweep();
    let results = [
        ("structural rows recovered exactly", criterion_1()),
        ("closed form matches gradient descent", criterion_2()),
        ("convergence magnitude on the fixture", criterion_3(&sweep)),
        ("CML never worse than UML", criterion_4(&sweep)),
        ("inverse square-root scaling", criterion_5(&sweep)),
        ("high-probability bound holds", criterion_6()),
        ("noise scale recovered", criterion_7()),
        ("regularizer limits", criterion_8()),
        ("spectral prediction", criterion_9()),
        ("determinism and round trips", criterion_10()),
    ];
    for (i, (name, o)) in results.iter().enumerate() {
        println!(
            "criterion {:>2} {}: {} ({})",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            name,
            o.detail
        );
    }
    let failed: Vec<usize> = results
        .iter()
        .enumerate()
        .filter(|(_, (_, o))| !o.pass)
        .map(|(i, _)| i + 1)
        .collect();
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
