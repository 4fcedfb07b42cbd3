//! Seed fan-out.
//!
//! Every random stream in the engine is derived from one user seed plus a
//! component label and a counter, so independent parts of a run never share
//! state and parallel workers can be given their own streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a, used to turn labels and ids into stable 64-bit keys.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Derive a child seed from `seed`, a component label and a path of indices.
pub fn derive_seed(seed: u64, component: &str, path: &[u64]) -> u64 {
    let mut h = splitmix64(seed ^ fnv1a(component.as_bytes()));
    for &i in path {
        h = splitmix64(h ^ splitmix64(i));
    }
    h
}

pub fn stream(seed: u64, component: &str, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, component, path))
}
