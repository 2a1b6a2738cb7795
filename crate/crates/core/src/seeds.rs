//! Deterministic derivation of independent RNG seeds from one run seed.

/// splitmix64 finalizer; decorrelates nearby inputs.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derive a child seed from a base seed and a stream tag path. Different
/// paths give statistically independent streams; the same path always gives
/// the same seed.
pub fn derive(base: u64, path: &[u64]) -> u64 {
    let mut state = splitmix64(base);
    for &tag in path {
        state = splitmix64(state ^ splitmix64(tag));
    }
    state
}
