//! Grid models, network reduction and the linearized swing-dynamics matrices.
//!
//! The state ordering used throughout the crate is `[δ_1..δ_N, ω_1..ω_N]`:
//! rotor-angle deviations first, then rotor-speed deviations, one entry per
//! generator of the (reduced) network.

use std::collections::{BTreeSet, VecDeque};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A generator bus with its swing parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub node: usize,
    /// Inertia `M_i` (s², per-unit base).
    pub inertia: f64,
    /// Damping `D_i` (per-unit).
    pub damping: f64,
    /// Standard deviation of the ambient power injection noise (per-unit).
    pub sigma_p: f64,
}

/// A transmission line with its effective susceptance.
///
/// The conductance is metadata only; the linearized dynamics use `beta` alone.
#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    pub beta: f64,
    pub gamma: Option<f64>,
}

/// A validated network: buses, generator parameters and lines.
///
/// Buses that are not generators are passive loads and are eliminated by
/// [`kron_reduce`] before the dynamics are assembled.
#[derive(Debug, Clone, PartialEq)]
pub struct GridModel {
    n_nodes: usize,
    generators: Vec<Generator>,
    lines: Vec<Line>,
}

impl GridModel {
    /// Builds a model, checking every structural invariant.
    ///
    /// Generators are stored in ascending node order regardless of the
    /// order they are supplied in.
    pub fn new(n_nodes: usize, mut generators: Vec<Generator>, lines: Vec<Line>) -> Result<Self> {
        if n_nodes == 0 {
            return Err(Error::validation(
                "n_nodes",
                "model must contain at least one node",
            ));
        }
        if generators.is_empty() {
            return Err(Error::validation(
                "generators",
                "model must contain at least one generator",
            ));
        }
        generators.sort_by_key(|g| g.node);
        for pair in generators.windows(2) {
            if pair[0].node == pair[1].node {
                return Err(Error::validation(
                    "generators",
                    format!("node {} listed as a generator twice", pair[0].node),
                ));
            }
        }
        for g in &generators {
            if g.node >= n_nodes {
                return Err(Error::validation(
                    "generators",
                    format!(
                        "generator node {} out of range (n_nodes = {n_nodes})",
                        g.node
                    ),
                ));
            }
            if !(g.inertia.is_finite() && g.inertia > 0.0) {
                return Err(Error::validation(
                    "M",
                    format!("inertia must be positive (node {}: {})", g.node, g.inertia),
                ));
            }
            if !(g.damping.is_finite() && g.damping > 0.0) {
                return Err(Error::validation(
                    "D",
                    format!("damping must be positive (node {}: {})", g.node, g.damping),
                ));
            }
            if !(g.sigma_p.is_finite() && g.sigma_p >= 0.0) {
                return Err(Error::validation(
                    "sigma_P",
                    format!(
                        "sigma_P must be nonnegative (node {}: {})",
                        g.node, g.sigma_p
                    ),
                ));
            }
        }

        let mut seen = BTreeSet::new();
        for line in &lines {
            if line.from >= n_nodes || line.to >= n_nodes {
                return Err(Error::validation(
                    "lines",
                    format!(
                        "line ({}, {}) references a node outside 0..{n_nodes}",
                        line.from, line.to
                    ),
                ));
            }
            if line.from == line.to {
                return Err(Error::validation(
                    "lines",
                    format!("self-loop on node {}", line.from),
                ));
            }
            let key = (line.from.min(line.to), line.from.max(line.to));
            if !seen.insert(key) {
                return Err(Error::validation(
                    "lines",
                    format!("duplicate line ({}, {})", key.0, key.1),
                ));
            }
            if !(line.beta.is_finite() && line.beta > 0.0) {
                return Err(Error::validation(
                    "beta",
                    format!(
                        "beta must be positive (line ({}, {}): {})",
                        line.from, line.to, line.beta
                    ),
                ));
            }
            if let Some(gamma) = line.gamma {
                if !(gamma.is_finite() && gamma >= 0.0) {
                    return Err(Error::validation(
                        "gamma",
                        format!(
                            "gamma must be nonnegative (line ({}, {}): {gamma})",
                            line.from, line.to
                        ),
                    ));
                }
            }
        }

        let model = GridModel {
            n_nodes,
            generators,
            lines,
        };
        if let Some(orphan) = model.first_unreachable_node() {
            return Err(Error::validation(
                "lines",
                format!("network is not connected (node {orphan} unreachable from node 0)"),
            ));
        }
        Ok(model)
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_generators(&self) -> usize {
        self.generators.len()
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    /// Generator node indices in ascending order.
    pub fn generator_ids(&self) -> Vec<usize> {
        self.generators.iter().map(|g| g.node).collect()
    }

    pub fn inertia(&self) -> Vec<f64> {
        self.generators.iter().map(|g| g.inertia).collect()
    }

    pub fn damping(&self) -> Vec<f64> {
        self.generators.iter().map(|g| g.damping).collect()
    }

    pub fn sigma_p(&self) -> Vec<f64> {
        self.generators.iter().map(|g| g.sigma_p).collect()
    }

    fn first_unreachable_node(&self) -> Option<usize> {
        let mut adjacency = vec![Vec::new(); self.n_nodes];
        for line in &self.lines {
            adjacency[line.from].push(line.to);
            adjacency[line.to].push(line.from);
        }
        let reached = reachable(&adjacency, [0]);
        reached.iter().position(|r| !r)
    }

    /// Kron-reduced continuous-time system for this model.
    pub fn continuous_system(&self) -> Result<ContinuousSystem> {
        let laplacian = build_laplacian(self);
        let reduced = kron_reduce(&laplacian, &self.generator_ids())?;
        build_continuous(self, &reduced)
    }
}

fn reachable(adjacency: &[Vec<usize>], sources: impl IntoIterator<Item = usize>) -> Vec<bool> {
    let mut seen = vec![false; adjacency.len()];
    let mut queue = VecDeque::new();
    for s in sources {
        if !seen[s] {
            seen[s] = true;
            queue.push_back(s);
        }
    }
    while let Some(u) = queue.pop_front() {
        for &v in &adjacency[u] {
            if !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    seen
}

/// Continuous-time linearized swing dynamics `dX/dt = A_d X + noise`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousSystem {
    pub n_gen: usize,
    /// `[[0, I], [-M⁻¹L, -M⁻¹D]]`, 2N×2N.
    pub a_d: DMatrix<f64>,
    /// Zero on the angle coordinates, `σ_P,i / M_i` on the speed coordinates.
    pub noise_scale: DVector<f64>,
}

/// One-step Euler–Maruyama map `X_{t+1} = A X_t + diag(b) ξ_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSystem {
    pub n_gen: usize,
    pub a: DMatrix<f64>,
    pub b_diag: DVector<f64>,
    pub dt: f64,
}

impl DiscreteSystem {
    /// Wraps an arbitrary one-step matrix and noise diagonal.
    pub fn new(n_gen: usize, a: DMatrix<f64>, b_diag: DVector<f64>, dt: f64) -> Result<Self> {
        let dim = 2 * n_gen;
        if n_gen == 0 {
            return Err(Error::validation("n_gen", "must be at least 1"));
        }
        if a.nrows() != dim || a.ncols() != dim {
            return Err(Error::dimension(
                "one-step matrix",
                dim,
                a.nrows().max(a.ncols()),
            ));
        }
        if b_diag.len() != dim {
            return Err(Error::dimension("noise diagonal", dim, b_diag.len()));
        }
        if b_diag.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return Err(Error::validation(
                "b_diag",
                "noise scales must be finite and nonnegative",
            ));
        }
        check_dt(dt)?;
        Ok(DiscreteSystem {
            n_gen,
            a,
            b_diag,
            dt,
        })
    }

    pub fn dim(&self) -> usize {
        2 * self.n_gen
    }

    /// Spectral norm of the diagonal noise matrix.
    pub fn b_norm(&self) -> f64 {
        self.b_diag.iter().fold(0.0, |m, b| m.max(b.abs()))
    }
}

pub(crate) fn check_dt(dt: f64) -> Result<()> {
    if dt.is_finite() && dt > 0.0 {
        Ok(())
    } else {
        Err(Error::validation(
            "dt",
            format!("time step must be positive, got {dt}"),
        ))
    }
}

/// Susceptance-weighted Laplacian of the full network.
pub fn build_laplacian(model: &GridModel) -> DMatrix<f64> {
    let n = model.n_nodes();
    let mut l = DMatrix::zeros(n, n);
    for line in model.lines() {
        let (i, j, b) = (line.from, line.to, line.beta);
        l[(i, j)] -= b;
        l[(j, i)] -= b;
        l[(i, i)] += b;
        l[(j, j)] += b;
    }
    l
}

/// Eliminates every node not in `generator_ids` via the Schur complement
/// `L_gg − L_gl L_ll⁻¹ L_lg`.
///
/// Rows and columns of the result follow the order of `generator_ids`.
pub fn kron_reduce(laplacian: &DMatrix<f64>, generator_ids: &[usize]) -> Result<DMatrix<f64>> {
    let n = laplacian.nrows();
    if laplacian.ncols() != n {
        return Err(Error::dimension("laplacian (square)", n, laplacian.ncols()));
    }
    if generator_ids.is_empty() {
        return Err(Error::validation(
            "generator_ids",
            "at least one generator is required",
        ));
    }
    let mut is_gen = vec![false; n];
    for &g in generator_ids {
        if g >= n {
            return Err(Error::validation(
                "generator_ids",
                format!("index {g} out of range for a {n}-node laplacian"),
            ));
        }
        if is_gen[g] {
            return Err(Error::validation(
                "generator_ids",
                format!("index {g} repeated"),
            ));
        }
        is_gen[g] = true;
    }
    let loads: Vec<usize> = (0..n).filter(|&i| !is_gen[i]).collect();
    let gens = generator_ids;
    let l_gg = laplacian.select_rows(gens).select_columns(gens);
    if loads.is_empty() {
        return Ok(l_gg);
    }

    let l_ll = laplacian.select_rows(&loads).select_columns(&loads);
    let l_lg = laplacian.select_rows(&loads).select_columns(gens);
    let chol = match l_ll.clone().cholesky() {
        Some(c) => c,
        None => return Err(disconnected_loads(laplacian, &is_gen)),
    };
    let x = chol.solve(&l_lg);
    let mut reduced = l_gg - l_lg.transpose() * x;
    // The Schur complement is symmetric in exact arithmetic.
    let sym = (&reduced + reduced.transpose()) * 0.5;
    reduced.copy_from(&sym);
    Ok(reduced)
}

fn disconnected_loads(laplacian: &DMatrix<f64>, is_gen: &[bool]) -> Error {
    let n = laplacian.nrows();
    let adjacency: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i && laplacian[(i, j)] != 0.0)
                .collect()
        })
        .collect();
    let reached = reachable(&adjacency, (0..n).filter(|&i| is_gen[i]));
    let orphans: Vec<usize> = (0..n).filter(|&i| !reached[i]).collect();
    if orphans.is_empty() {
        Error::Singular("load-load block of the laplacian is not positive definite".into())
    } else {
        Error::Singular(format!(
            "load buses {orphans:?} are disconnected from every generator; \
             the load-load block is singular"
        ))
    }
}

/// Assembles `A_d` and the noise-scale vector from generator parameters and
/// the reduced Laplacian.
pub fn build_continuous(
    model: &GridModel,
    reduced_laplacian: &DMatrix<f64>,
) -> Result<ContinuousSystem> {
    let n = model.n_generators();
    if reduced_laplacian.nrows() != n || reduced_laplacian.ncols() != n {
        return Err(Error::dimension(
            "reduced laplacian vs generator count",
            n,
            reduced_laplacian.nrows().max(reduced_laplacian.ncols()),
        ));
    }
    let mut a_d = DMatrix::zeros(2 * n, 2 * n);
    let mut noise_scale = DVector::zeros(2 * n);
    for i in 0..n {
        a_d[(i, n + i)] = 1.0;
    }
    for (i, g) in model.generators().iter().enumerate() {
        for j in 0..n {
            a_d[(n + i, j)] = -reduced_laplacian[(i, j)] / g.inertia;
        }
        a_d[(n + i, n + i)] = -g.damping / g.inertia;
        noise_scale[n + i] = g.sigma_p / g.inertia;
    }
    Ok(ContinuousSystem {
        n_gen: n,
        a_d,
        noise_scale,
    })
}

/// Euler–Maruyama discretization: `A = I + Δt·A_d`, `b = noise_scale·√Δt`.
pub fn build_discrete(sys: &ContinuousSystem, dt: f64) -> Result<DiscreteSystem> {
    check_dt(dt)?;
    let dim = 2 * sys.n_gen;
    let a = DMatrix::identity(dim, dim) + &sys.a_d * dt;
    let b_diag = &sys.noise_scale * dt.sqrt();
    Ok(DiscreteSystem {
        n_gen: sys.n_gen,
        a,
        b_diag,
        dt,
    })
}
