//! Derivation of per-stage seeds from one master seed.
//!
//! `derive_seed(master, stage)` hashes the stage label with 64-bit FNV-1a,
//! xors it into the master seed and finalizes with the SplitMix64 mixer.
//! Every random choice in the pipeline (data split, weight init, synthetic
//! noise) draws from a seed derived this way.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(FNV_OFFSET, |h, b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, stage: &str) -> u64 {
    splitmix64(master ^ fnv1a(stage))
}
