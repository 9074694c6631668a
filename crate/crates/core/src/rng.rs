//! Deterministic seeded RNG streams.
//!
//! Every stochastic component draws from a ChaCha stream derived from a
//! master seed and a stable index, so results do not depend on scheduling
//! or worker counts.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent stream `index` of a ChaCha generator keyed by `master_seed`.
pub fn substream(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Stable 64-bit mix of a seed and a salt (SplitMix64 finalizer), used to
/// derive per-group seeds from one configured master seed.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
