//! Independent, reproducible random streams derived from one run seed.
//!
//! Every consumer of randomness in a run draws from its own ChaCha stream so
//! that, for example, enabling the policy never perturbs batch construction.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type RunRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Data = 1,
    Split = 2,
    ModelInit = 3,
    Batches = 4,
    Negatives = 5,
    PolicyInit = 6,
    PolicyActions = 7,
    Evaluation = 8,
}

pub fn stream(seed: u64, which: Stream) -> RunRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}

/// Seed for a derived quantity (e.g. the k-means seed used for NMI).
pub fn derived_seed(seed: u64, which: Stream) -> u64 {
    use rand::RngCore;
    stream(seed, which).next_u64()
}
