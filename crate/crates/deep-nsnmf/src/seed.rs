//! Deterministic seed derivation. All randomness in a run flows from one
//! root seed; consumers get independent streams via a stable counter-based
//! hash (FNV-1a, so derivation does not depend on std's hasher).

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8], mut state: u64) -> u64 {
    for &b in bytes {
        state ^= b as u64;
        state = state.wrapping_mul(FNV_PRIME);
    }
    state
}

/// Derives a child seed from `(root, domain, counter)`.
pub fn derive_seed(root: u64, domain: &str, counter: u64) -> u64 {
    let mut state = fnv1a(&root.to_le_bytes(), FNV_OFFSET);
    state = fnv1a(domain.as_bytes(), state);
    fnv1a(&counter.to_le_bytes(), state)
}

/// Seeded generator for one consumer.
pub fn rng_for(root: u64, domain: &str, counter: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, domain, counter))
}

/// Generator seeded directly from a seed value.
pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
