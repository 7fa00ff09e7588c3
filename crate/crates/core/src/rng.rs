//! Deterministic random stream derivation.
//!
//! Every draw in the library flows from one root seed through SplitMix64 key
//! mixing into an independent ChaCha8 stream per (purpose, index). Components
//! can therefore run in any order, or in parallel over samples, and still
//! reproduce bit-identical values.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a root seed, a purpose tag, and an index into a stream key.
pub fn derive_key(seed: u64, tag: &str, index: u64) -> u64 {
    let mut h = splitmix(seed);
    for &b in tag.as_bytes() {
        h = splitmix(h ^ u64::from(b));
    }
    splitmix(h ^ index)
}

/// Independent generator for one (purpose, index) slot under a root seed.
pub fn stream(seed: u64, tag: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_key(seed, tag, index))
}
