//! Seed plumbing. Every random choice in the crate goes through a ChaCha
//! stream derived from a user seed plus a stable tag, so results never
//! depend on iteration order or thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// 64-bit FNV-1a. Stable across platforms and releases.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn mix(mut z: u64) -> u64 {
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive an independent stream from `seed` and a list of tags.
pub fn derive(seed: u64, tags: &[u64]) -> Rng {
    let mut state = mix(seed ^ 0x9e37_79b9_7f4a_7c15);
    for &t in tags {
        state = mix(state ^ mix(t.wrapping_add(0x632b_e59b_d9b4_e019)));
    }
    ChaCha8Rng::seed_from_u64(state)
}

pub fn derive_str(seed: u64, tag: &str, extra: &[u64]) -> Rng {
    let mut tags = Vec::with_capacity(extra.len() + 1);
    tags.push(fnv1a(tag.as_bytes()));
    tags.extend_from_slice(extra);
    derive(seed, &tags)
}
