//! Seed derivation.
//!
//! A run is driven by one master 64-bit seed. Every independent random
//! stream (a replicate, the A-points of a replicate, a chunk of shadowed
//! queries, ...) gets its own child seed computed by [`derive_seed`], and the
//! stream itself is a [`ChaCha8Rng`] seeded from that child. Child seeds are
//! a pure function of `(parent, tag)`, so results never depend on how work is
//! scheduled across threads.
//!
//! The mixing function is SplitMix64's output finalizer applied to
//! `parent ^ finalize(tag + GOLDEN)`; it is a bijection on `u64` for a fixed
//! tag, so distinct parents never collide under the same tag.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn finalize(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for stream `tag` under `parent`.
pub fn derive_seed(parent: u64, tag: u64) -> u64 {
    finalize(parent ^ finalize(tag.wrapping_add(GOLDEN)))
}

/// Well-known tags, so that different consumers of the same parent seed never
/// share a stream.
pub mod tags {
    pub const B_POINTS: u64 = 0xB0;
    pub const A_POINTS: u64 = 0xA0;
    pub const SHADOW: u64 = 0x5A;
    pub const REPLICATE: u64 = 0x1000;
}

/// Deterministic random stream for `seed`.
pub fn stream(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream for child `tag` of `parent`.
pub fn child_stream(parent: u64, tag: u64) -> ChaCha8Rng {
    stream(derive_seed(parent, tag))
}
