//! Deterministic seed derivation.
//!
//! Every random decision in the crate draws from a ChaCha stream seeded through
//! this module, so a single master seed reproduces training, trajectory
//! generation, degradation, and recognition bit-for-bit, including when goals
//! or experiment cells run in parallel.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; stable scrambling for seed derivation.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a over a label, used to separate seed domains ("train", "traj", ...).
fn label_hash(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derive a child seed from a master seed, a domain label, and indices.
///
/// The same inputs always yield the same output; distinct labels or indices
/// yield statistically independent streams.
pub fn derive_seed(master: u64, label: &str, indices: &[u64]) -> u64 {
    let mut z = mix(master ^ label_hash(label));
    for &ix in indices {
        z = mix(z ^ ix);
    }
    z
}

/// Convenience: a ChaCha RNG seeded via [`derive_seed`].
pub fn derive_rng(master: u64, label: &str, indices: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, label, indices))
}
