use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use swingid::analysis::{
    corollary2_bound, match_spectra, relative_error, spectral_distance, spectrum, theorem1_bound,
    BoundReport,
};
use swingid::estimators::EstimatorKind;
use swingid::fixture::{random_geometric, FixtureParams};
use swingid::io::{
    format_eigen_table, format_matrix, format_model, load_config, load_matrix, load_model,
    load_trajectory, samples_in, save_matrix, save_toml, save_trajectory, to_toml, write_text,
    EigenRow, EstimateMetadata, EstimationConfig, EstimatorSpec, ExperimentConfig,
    GenerationConfig, SweepConfig, SweepVariable, DEFAULT_DT_BASE, DEFAULT_STRIDE_GRID,
};
use swingid::pipeline::{
    estimate_all, format_mean_table, format_sweep_table, generate, prepare, run_sweep, sweep_means,
    EstimateOptions, Truth,
};
use swingid::sim::default_burn_in;
use swingid::{build_discrete, build_laplacian, kron_reduce, Complex64, Error, Result};

use crate::args::{
    BoundArgs, EigenArgs, EstimateArgs, EstimationArgs, FixtureArgs, GenerationArgs, KronArgs,
    SimulateArgs, SweepArgs,
};
use crate::manifest::{sha256_file, Manifest};

fn invalid(field: &str, message: impl Into<String>) -> Error {
    Error::Validation {
        field: field.into(),
        message: message.into(),
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes to `out`, or to stdout when no path is given.
fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_text(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn experiment_config(g: &GenerationArgs, out: Option<&PathBuf>) -> Result<ExperimentConfig> {
    let mut config = match &g.config {
        Some(path) => load_config(path)?,
        None => ExperimentConfig {
            model_path: g
                .model
                .clone()
                .ok_or_else(|| invalid("--model", "required without --config"))?,
            outputs: PathBuf::from("."),
            generation: GenerationConfig {
                dt_base: DEFAULT_DT_BASE,
                t_obs: g
                    .t_obs
                    .ok_or_else(|| invalid("--t-obs", "required without --config"))?,
                burn_in: None,
                seeds: Vec::new(),
            },
            estimation: EstimationConfig::default(),
            sweep: None,
        },
    };
    let gen = &mut config.generation;
    if let Some(m) = &g.model {
        config.model_path = m.clone();
    }
    if let Some(v) = g.dt_base {
        gen.dt_base = v;
    }
    if let Some(v) = g.t_obs {
        gen.t_obs = v;
    }
    if g.burn_in.is_some() {
        gen.burn_in = g.burn_in;
    }
    if !g.seeds.is_empty() {
        gen.seeds = g.seeds.clone();
    }
    if let Some(n) = g.n_seeds {
        gen.seeds = (1..=n).collect();
    }
    if let Some(o) = out {
        config.outputs = o.clone();
    }
    Ok(config)
}

fn spec_from_flags(kind: EstimatorKind, a: &EstimationArgs) -> EstimatorSpec {
    let mut spec = EstimatorSpec::plain(kind);
    match kind {
        EstimatorKind::Uml | EstimatorKind::Cml => {}
        EstimatorKind::Lasso => spec.lambda = a.lambda,
        EstimatorKind::SparseLowRank => {
            spec.lambda = a.lambda;
            spec.eta = a.eta;
        }
        EstimatorKind::Tikhonov => {
            spec.nu = a.nu;
            spec.prior = a.prior.clone();
        }
    }
    spec
}

fn apply_estimation(cfg: &mut EstimationConfig, a: &EstimationArgs) {
    if let Some(s) = a.stride {
        cfg.stride = s;
    }
    if !a.estimators.is_empty() {
        cfg.estimators = a
            .estimators
            .iter()
            .map(|&k| spec_from_flags(k, a))
            .collect();
    } else {
        for spec in &mut cfg.estimators {
            let flags = spec_from_flags(spec.kind, a);
            spec.lambda = flags.lambda.or(spec.lambda);
            spec.eta = flags.eta.or(spec.eta);
            spec.nu = flags.nu.or(spec.nu);
            spec.prior = flags.prior.or(spec.prior.take());
        }
    }
    cfg.threshold |= a.threshold;
    cfg.estimate_b |= a.estimate_b;
    cfg.solver.pseudo_inverse |= a.pseudo_inverse;
}

fn options(cfg: &EstimationConfig) -> EstimateOptions {
    EstimateOptions {
        stride: cfg.stride,
        threshold: cfg.threshold,
        estimate_b: cfg.estimate_b,
        solver: cfg.solver.clone(),
    }
}

fn warn_samples(config: &ExperimentConfig, n_gen: usize) {
    for w in config.sample_warnings(n_gen) {
        eprintln!("warning: {w}");
    }
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

pub fn simulate(a: SimulateArgs) -> Result<()> {
    let mut config = experiment_config(&a.generation, a.out.as_ref())?;
    config.validate()?;
    let model = load_model(&config.model_path)?;
    warn_samples(&config, model.n_generators());
    let g = &config.generation;
    let truth = Truth::new(&model, g.dt_base)?;
    let n_samples = samples_in(g.t_obs, g.dt_base)?;
    let burn_in = match g.burn_in {
        Some(b) => b,
        None => default_burn_in(&truth.discrete)?,
    };
    create_dir(&config.outputs)?;

    let files = g
        .seeds
        .par_iter()
        .map(|&seed| {
            let traj = generate(&truth.discrete, n_samples, seed, Some(burn_in))?;
            let path = config.outputs.join(format!("trajectory_seed{seed}.csv"));
            save_trajectory(&path, &traj)?;
            Ok(file_name(&path))
        })
        .collect::<Result<Vec<_>>>()?;

    config.generation.burn_in = Some(burn_in);
    let mut manifest = Manifest::new("simulate", Some(&config.model_path))?;
    manifest.n_samples = Some(n_samples);
    manifest.files = files;
    manifest.generation = Some(config.generation.clone());
    manifest.save(&config.outputs)?;
    println!(
        "wrote {} trajectories of {n_samples} samples to {}",
        manifest.files.len(),
        config.outputs.display()
    );
    Ok(())
}

/// File-name stem for an estimator label, e.g. `LASSO[lambda=0.5]` →
/// `lasso_lambda_0.5`.
fn slug(label: &str) -> String {
    let mut s: String = label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' {
                c.to_ascii_lowercase()
            } else {
                '_'
            }
        })
        .collect();
    while s.ends_with('_') {
        s.pop();
    }
    s
}

pub fn estimate(a: EstimateArgs) -> Result<()> {
    let (mut cfg, config_model, config_out) = match &a.config {
        Some(p) => {
            let c = load_config(p)?;
            (c.estimation, Some(c.model_path), Some(c.outputs))
        }
        None => (EstimationConfig::default(), None, None),
    };
    apply_estimation(&mut cfg, &a.estimation);
    if cfg.stride == 0 {
        return Err(invalid("stride", "must be at least 1"));
    }
    let estimators = prepare(&cfg.estimators)?;
    let traj = load_trajectory(&a.trajectory)?;
    let model_path = a.model.clone().or(config_model);
    let truth = match &model_path {
        Some(p) => {
            let sys = load_model(p)?.continuous_system()?;
            if sys.n_gen != traj.n_gen() {
                return Err(Error::Dimension {
                    context: "generators in model vs trajectory".into(),
                    expected: sys.n_gen,
                    actual: traj.n_gen(),
                });
            }
            Some(sys)
        }
        None => None,
    };
    let out = a.out.or(config_out).unwrap_or_else(|| PathBuf::from("."));
    let outcomes = estimate_all(&traj, &estimators, &options(&cfg))?;
    create_dir(&out)?;

    let mut files = Vec::new();
    let mut first_error = None;
    for (est, outcome) in estimators.iter().zip(outcomes) {
        let label = est.label();
        let e = match outcome {
            Ok(e) => e,
            Err(err) => {
                eprintln!("{label}: {err}");
                first_error.get_or_insert(err);
                continue;
            }
        };
        let rel = truth
            .as_ref()
            .map(|t| relative_error(&e.a_d_hat, &t.a_d))
            .transpose()?;
        let stem = slug(&label);
        let mut written = vec![
            (format!("{stem}_A_d.csv"), &e.a_d_hat),
            (format!("{stem}_A.csv"), &e.result.a_hat),
        ];
        if let Some(l) = &e.result.l_hat {
            written.push((format!("{stem}_L.csv"), l));
        }
        for (name, m) in written {
            save_matrix(&out.join(&name), m)?;
            files.push(name);
        }
        let r = &e.result;
        let metadata = EstimateMetadata {
            estimator: r.estimator,
            n_gen: traj.n_gen(),
            dt: e.dt,
            stride: cfg.stride,
            n_samples: e.n_samples,
            objective: r.objective,
            hyperparams: r.hyperparams.clone(),
            thresholded: e.thresholded,
            relative_error: rel,
            b_hat: r.b_hat.as_ref().map(|b| b.iter().copied().collect()),
            iterations: r.diagnostics.iterations,
            optimality_residual: r.diagnostics.optimality_residual,
        };
        let name = format!("{stem}.toml");
        save_toml(&out.join(&name), &metadata)?;
        files.push(name);
        match rel {
            Some(eps) => println!("{label}: relative error {eps:.6e}"),
            None => println!("{label}: wrote {stem}_A_d.csv"),
        }
    }

    let mut manifest = Manifest::new("estimate", model_path.as_deref())?;
    manifest.trajectory_path = Some(a.trajectory.display().to_string());
    manifest.trajectory_sha256 = Some(sha256_file(&a.trajectory)?);
    manifest.files = files;
    manifest.estimation = Some(cfg);
    manifest.save(&out)?;
    first_error.map_or(Ok(()), Err)
}

pub fn sweep(a: SweepArgs) -> Result<()> {
    let mut config = experiment_config(&a.generation, a.out.as_ref())?;
    apply_estimation(&mut config.estimation, &a.estimation);
    match (a.variable, config.sweep.as_mut()) {
        (Some(variable), _) => {
            let values = if !a.values.is_empty() {
                a.values.clone()
            } else if variable == SweepVariable::Stride {
                DEFAULT_STRIDE_GRID.iter().map(|&k| k as f64).collect()
            } else {
                return Err(invalid("--values", "required for a t_obs sweep"));
            };
            config.sweep = Some(SweepConfig { variable, values });
        }
        (None, Some(sweep)) if !a.values.is_empty() => sweep.values = a.values.clone(),
        (None, Some(_)) => {}
        (None, None) => {
            return Err(invalid(
                "sweep",
                "no sweep axis: pass --variable or add a [sweep] section",
            ))
        }
    }
    config.validate()?;
    let model = load_model(&config.model_path)?;
    warn_samples(&config, model.n_generators());
    let truth = Truth::new(&model, config.generation.dt_base)?;
    let estimators = prepare(&config.estimation.estimators)?;
    let rows = run_sweep(&truth, &config, &estimators)?;
    let means = sweep_means(&rows);

    create_dir(&config.outputs)?;
    write_text(
        &config.outputs.join("sweep.csv"),
        &format_sweep_table(&rows),
    )?;
    let mean_table = format_mean_table(&means);
    write_text(&config.outputs.join("sweep_mean.csv"), &mean_table)?;
    let mut manifest = Manifest::new("sweep", Some(&config.model_path))?;
    manifest.files = vec!["sweep.csv".into(), "sweep_mean.csv".into()];
    manifest.generation = Some(config.generation.clone());
    manifest.estimation = Some(config.estimation.clone());
    manifest.sweep = config.sweep.clone();
    manifest.save(&config.outputs)?;
    print!("{mean_table}");
    let failed: usize = means.iter().map(|m| m.n_failed).sum();
    if failed > 0 {
        eprintln!("warning: {failed} of {} cells failed", rows.len());
    }
    Ok(())
}

/// Largest real part first, then largest imaginary part.
fn sort_spectrum(values: &mut [Complex64]) {
    values.sort_by(|x, y| y.re.total_cmp(&x.re).then(y.im.total_cmp(&x.im)));
}

fn rows(values: &[Complex64], source: &str) -> Vec<EigenRow> {
    values
        .iter()
        .map(|&value| EigenRow {
            value,
            source: source.into(),
        })
        .collect()
}

pub fn eigen(a: EigenArgs) -> Result<()> {
    let estimate = a.estimate.as_deref().map(load_matrix).transpose()?;
    let truth = match &a.model {
        Some(p) => Some(load_model(p)?.continuous_system()?.a_d),
        None => None,
    };
    let estimate = estimate.map(|m| spectrum(&m, a.zero_tol)).transpose()?;
    let truth = truth.map(|m| spectrum(&m, a.zero_tol)).transpose()?;

    let mut summary = Vec::new();
    let table = match (estimate, truth) {
        (Some(est), Some(tru)) => {
            let mut truth_values = tru.eigenvalues.clone();
            sort_spectrum(&mut truth_values);
            let pairing = match_spectra(&truth_values, &est.eigenvalues)?;
            let mut table = Vec::new();
            for (i, &j) in pairing.iter().enumerate() {
                table.extend(rows(&truth_values[i..=i], "truth"));
                table.extend(rows(&est.eigenvalues[j..=j], "estimate"));
            }
            summary.push(format!(
                "spectral_distance {:.6e}",
                spectral_distance(&truth_values, &est.eigenvalues)?
            ));
            if tru.critical.len() == est.critical.len() {
                summary.push(format!(
                    "critical_distance {:.6e}",
                    spectral_distance(&tru.critical, &est.critical)?
                ));
            } else {
                summary.push("critical_distance n/a (real vs complex critical mode)".into());
            }
            table
        }
        (Some(only), None) | (None, Some(only)) => {
            let source = if a.estimate.is_some() {
                "estimate"
            } else {
                "truth"
            };
            let mut values = only.eigenvalues.clone();
            sort_spectrum(&mut values);
            rows(&values, source)
        }
        (None, None) => return Err(invalid("eigen", "pass --estimate and/or --model")),
    };
    emit(a.out.as_deref(), &format_eigen_table(&table))?;
    for line in summary {
        if a.out.is_some() {
            println!("{line}");
        } else {
            eprintln!("{line}");
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct BoundOutput {
    model_path: String,
    model_sha256: String,
    dt: f64,
    stride: usize,
    seed: u64,
    discrete: BoundReport,
    continuous: BoundReport,
}

pub fn bound(a: BoundArgs) -> Result<()> {
    let mut config = experiment_config(&a.generation, None)?;
    if config.generation.seeds.is_empty() {
        config.generation.seeds.push(0);
    }
    if let Some(s) = a.stride {
        config.estimation.stride = s;
    }
    config.validate()?;
    let g = &config.generation;
    let stride = config.estimation.stride;
    let seed = g.seeds[0];
    let model = load_model(&config.model_path)?;
    let dt = g.dt_base * stride as f64;
    let sys = build_discrete(&model.continuous_system()?, dt)?;
    let n_samples = samples_in(g.t_obs, g.dt_base)?.div_ceil(stride);
    let discrete = theorem1_bound(&sys, n_samples, a.epsilon, a.trials, seed)?;
    let continuous =
        corollary2_bound(&model.inertia(), &model.sigma_p(), dt, a.epsilon, &discrete)?;
    let output = BoundOutput {
        model_path: config.model_path.display().to_string(),
        model_sha256: sha256_file(&config.model_path)?,
        dt,
        stride,
        seed,
        discrete,
        continuous,
    };
    emit(a.out.as_deref(), &to_toml(&output)?)
}

pub fn kron(a: KronArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let reduced = kron_reduce(&build_laplacian(&model), &model.generator_ids())?;
    emit(a.out.as_deref(), &format_matrix(&reduced))
}

pub fn fixture(a: FixtureArgs) -> Result<()> {
    let params = FixtureParams {
        n_generators: a.generators,
        n_loads: a.loads,
        ..FixtureParams::default()
    };
    if params.n_generators == 0 {
        return Err(invalid("--generators", "must be at least 1"));
    }
    let model = random_geometric(&params, a.seed)?;
    emit(a.out.as_deref(), &format_model(&model))
}
