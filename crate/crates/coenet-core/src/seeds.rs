//! Deterministic seed derivation.
//!
//! One master seed fans out to per-stage and per-replicate seeds through a
//! fixed splitting rule, so adding slices or selectors to a run never
//! perturbs the randomness of the others.

/// splitmix64 finalizer; good avalanche, stable across platforms.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Seed for a named stage of a run, e.g. `"infomap/2016-low"`.
pub fn derive_seed(master: u64, tag: &str) -> u64 {
    splitmix64(master ^ fnv1a(tag.as_bytes()))
}

/// Seed for the `index`-th independent substream of a stage seed
/// (bootstrap replicate, infomap trial). Depends only on (seed, index),
/// so evaluation order and thread count cannot affect results.
pub fn substream(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index))
}
