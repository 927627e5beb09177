//! Simulation and identification of linearized ambient power-grid swing dynamics.
//!
//! The crate covers the whole pipeline: build the continuous dynamic state
//! matrix from a network ([`model`]), simulate Euler–Maruyama trajectories
//! ([`sim`]), recover the one-step matrix with maximum-likelihood and
//! regularized least-squares estimators ([`estimators`]), and evaluate
//! errors, finite-sample bounds and spectra ([`analysis`]). [`io`] holds the
//! text formats and [`pipeline`] the experiment driver used by the CLI.

pub mod analysis;
pub mod error;
pub mod estimators;
pub mod fixture;
pub mod io;
pub mod linalg;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
pub use model::{
    build_continuous, build_discrete, build_laplacian, kron_reduce, ContinuousSystem,
    DiscreteSystem, Generator, GridModel, Line,
};
pub use sim::{simulate, steady_start, subsample, Trajectory};

pub use nalgebra::{DMatrix, DVector};
pub use num_complex::Complex64;
