//! Seeded random streams.
//!
//! Every consumer of randomness gets its own ChaCha stream derived from a
//! `(seed, Stream)` pair. Streams with different tags never share output, so
//! training, evaluation, and policy noise stay disjoint even when they reuse
//! the same numeric seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Disjoint stream tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stream {
    /// Damage draws of an environment.
    Damage = 1,
    /// Bernoulli/Beta draws of the stochastic healing wrapper.
    Healing = 2,
    /// Environment seeds used while training an agent.
    TrainEnv = 3,
    /// Exploration, minibatch sampling, and weight initialization.
    Agent = 4,
    /// Stochastic policies (random baseline) during evaluation.
    Policy = 5,
    /// Offline prefill episodes.
    Prefill = 6,
    /// Grid dynamics and observation noise.
    Grid = 7,
    /// Grid observation noise.
    Observation = 8,
}

pub fn stream_rng(seed: u64, stream: Stream) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Mixes `(base, index)` into a fresh seed; used to derive per-episode
/// seeds inside a training stream.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = base
        .wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
