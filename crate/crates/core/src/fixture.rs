//! Synthetic test networks.
//!
//! [`random_geometric`] places buses uniformly in the unit square, joins every
//! pair closer than `radius`, and redraws positions until the graph is
//! connected. Generator parameters and line susceptances are drawn uniformly
//! from the configured ranges. The repository fixture
//! `fixtures/ten_generator.model` is `random_geometric(&FixtureParams::default(),
//! TEN_GENERATOR_SEED)`.

use rand::Rng;

use crate::error::Result;
use crate::model::{Generator, GridModel, Line};
use crate::rng;

/// Seed of the shipped 10-generator fixture.
pub const TEN_GENERATOR_SEED: u64 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureParams {
    pub n_generators: usize,
    pub n_loads: usize,
    pub radius: f64,
    pub inertia: (f64, f64),
    pub damping: (f64, f64),
    pub beta: (f64, f64),
    pub sigma_p: f64,
}

impl Default for FixtureParams {
    /// Ten generators and four passive loads with slow, well-damped
    /// dynamics: every mode satisfies `Δt·|λ|² ≪ 2|Re λ|` at Δt = 1/60 s, so
    /// the one-cycle Euler–Maruyama map is stable.
    fn default() -> Self {
        FixtureParams {
            n_generators: 10,
            n_loads: 4,
            radius: 0.4,
            inertia: (5.0, 10.0),
            damping: (0.5, 1.0),
            beta: (0.5, 2.0),
            sigma_p: 0.01,
        }
    }
}

fn uniform<R: Rng>(rng: &mut R, range: (f64, f64)) -> f64 {
    range.0 + (range.1 - range.0) * rng.random::<f64>()
}

/// Generators occupy nodes `0..n_generators`, loads the remaining indices.
pub fn random_geometric(params: &FixtureParams, seed: u64) -> Result<GridModel> {
    let mut rng = rng::stream(seed);
    let n = params.n_generators + params.n_loads;
    loop {
        let points: Vec<(f64, f64)> = (0..n).map(|_| (rng.random(), rng.random())).collect();
        let mut lines = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let (dx, dy) = (points[i].0 - points[j].0, points[i].1 - points[j].1);
                if (dx * dx + dy * dy).sqrt() < params.radius {
                    lines.push(Line {
                        from: i,
                        to: j,
                        beta: uniform(&mut rng, params.beta),
                        gamma: None,
                    });
                }
            }
        }
        let generators: Vec<Generator> = (0..params.n_generators)
            .map(|node| Generator {
                node,
                inertia: uniform(&mut rng, params.inertia),
                damping: uniform(&mut rng, params.damping),
                sigma_p: params.sigma_p,
            })
            .collect();
        match GridModel::new(n, generators, lines) {
            Ok(model) => return Ok(model),
            Err(crate::Error::Validation { ref field, .. }) if field == "lines" => continue,
            Err(e) => return Err(e),
        }
    }
}

/// The shipped 10-generator fixture, regenerated in memory.
pub fn ten_generator() -> GridModel {
    random_geometric(&FixtureParams::default(), TEN_GENERATOR_SEED)
        .expect("default fixture parameters are valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_is_deterministic_and_in_range() {
        let a = ten_generator();
        let b = ten_generator();
        assert_eq!(a, b);
        assert_eq!(a.n_generators(), 10);
        assert_eq!(a.n_nodes(), 14);
        for g in a.generators() {
            assert!((5.0..=10.0).contains(&g.inertia));
            assert!((0.5..=1.0).contains(&g.damping));
            assert_eq!(g.sigma_p, 0.01);
        }
        for l in a.lines() {
            assert!((0.5..=2.0).contains(&l.beta));
        }
    }

    #[test]
    fn fixture_discretization_is_stable() {
        let sys = ten_generator().continuous_system().unwrap();
        let d = crate::model::build_discrete(&sys, 1.0 / 60.0).unwrap();
        assert!(crate::sim::default_burn_in(&d).is_ok());
    }

    #[test]
    fn shipped_fixture_matches_generator() {
        let shipped = include_str!("../../../fixtures/ten_generator.model");
        assert_eq!(shipped, crate::io::format_model(&ten_generator()));
        assert_eq!(crate::io::parse_model(shipped).unwrap(), ten_generator());
    }
}
