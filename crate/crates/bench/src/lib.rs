//! Shared inputs for the benchmarks.

use swingid::fixture::ten_generator;
use swingid::pipeline::{generate, Truth};
use swingid::{subsample, DiscreteSystem, Trajectory};

pub const DT_BASE: f64 = 1.0 / 60.0;

/// The 10-generator fixture discretized at 60 Hz.
pub fn fixture_system() -> DiscreteSystem {
    Truth::new(&ten_generator(), DT_BASE)
        .expect("fixture is stable")
        .discrete
}

/// A stationary fixture trajectory of `t_obs` seconds, keeping every
/// `stride`-th sample.
pub fn fixture_trajectory(t_obs: f64, stride: usize, seed: u64) -> Trajectory {
    let n = (t_obs / DT_BASE).round() as usize;
    let traj = generate(&fixture_system(), n, seed, None).expect("fixture simulates");
    subsample(&traj, stride).expect("positive stride")
}
