//! Deterministic sub-seeding.
//!
//! Every random stream in a run is derived from the single run seed as
//! `sub_seed(seed, label, index)`: the label is hashed with FNV-1a, mixed
//! with the seed and index, and finalized with the SplitMix64 mixer. Streams
//! with different labels or indices are independent for practical purposes,
//! and adding a new stream never perturbs existing ones.

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn sub_seed(seed: u64, label: &str, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ fnv1a(label)).wrapping_add(index))
}
