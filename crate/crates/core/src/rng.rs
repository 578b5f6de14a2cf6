//! Seeded, splittable random streams.
//!
//! Every stochastic operation takes `&mut impl Rng`. Reproducible runs derive
//! one ChaCha stream per (seed, key) pair, so concurrent trials never share state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Root stream for a seed.
pub fn stream(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent child stream keyed by `key` (trial index, phase id, ...).
///
/// ChaCha exposes 2^64 streams per key; the child uses the seed's key with the
/// requested stream id, which keeps children disjoint without hashing.
pub fn substream(seed: u64, key: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(key);
    rng
}

/// Per-trial seed written to reports; derived deterministically from the run seed.
pub fn trial_seed(seed: u64, trial: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ trial.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
