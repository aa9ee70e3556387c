//! Deterministic random streams.
//!
//! Every independent unit of work (a Monte Carlo trial, a scene) gets its
//! own ChaCha8 stream addressed by `(seed, stream id)`, so results do not
//! depend on how work is scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub fn stream(seed: u64, id: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Uniform draw in `[0, 1)` with 53 bits of precision.
#[inline]
pub fn uniform(rng: &mut impl Rng) -> f64 {
    rng.random::<f64>()
}

/// SplitMix64 finalizer, used to derive sibling seeds (e.g. the calibration
/// scene of a benchmark) that share no stream with the parent seed.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
