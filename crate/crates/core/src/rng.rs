//! All randomness in the crate flows through ChaCha20 so that runs are
//! reproducible bit-for-bit across platforms and worker counts.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type Rng = ChaCha20Rng;

pub fn from_seed(seed: u64) -> Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Independent stream for item `index` under a master seed.
pub fn stream(seed: u64, index: u64) -> Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Derive a child seed; used where a stream must be split further
/// (trial -> restart -> ...).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    use rand::RngCore;
    stream(seed, index.wrapping_add(0x9e37_79b9_7f4a_7c15)).next_u64()
}
