//! Seed plumbing.
//!
//! All randomness flows from a single `u64` seed through named sub-streams
//! (`"data"`, `"labels"`, `"init"`, `"shuffle"`, ...), so regenerating one
//! stage never perturbs the draws of another. ChaCha keeps the streams
//! stable across platforms and library versions.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fnv1a(label: &str) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for byte in label.bytes() {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Generator for `(seed, label)`.
pub fn stream_rng(seed: u64, label: &str) -> ChaCha8Rng {
    indexed_stream_rng(seed, label, 0)
}

/// Generator for `(seed, label, index)`. The index distinguishes repeated
/// uses of the same stage, e.g. one shuffle stream per epoch.
pub fn indexed_stream_rng(seed: u64, label: &str, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(label) ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    rng
}
