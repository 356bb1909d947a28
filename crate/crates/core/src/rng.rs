//! Seeded random streams.
//!
//! Every stochastic routine takes a `u64` seed and draws from ChaCha8, a
//! counter-based generator whose output does not depend on the platform.
//! Independent substreams (one per completion, chain or tiling step) are
//! derived by mixing the base seed with a stream index.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for substream `stream` of `seed`.
pub fn substream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.wrapping_add(1));
    rng
}
