//! Seeded random streams.
//!
//! Every stochastic routine in the crate draws from ChaCha20
//! (`rand_chacha::ChaCha20Rng`) keyed by `SeedableRng::seed_from_u64`, and
//! turns uniform output into standard normals with the ziggurat sampler of
//! `rand_distr::StandardNormal`. Both are pure integer/table algorithms
//! apart from rare tail draws, so a seed reproduces the same stream on every
//! platform. Independent sub-streams (Monte Carlo trials, burn-in runs) get
//! their own seed through [`derive_seed`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

pub type StreamRng = ChaCha20Rng;

pub fn stream(seed: u64) -> StreamRng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Mixes a base seed with a stream index (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
