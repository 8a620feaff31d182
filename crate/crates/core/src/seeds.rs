// SPDX-License-Identifier: Apache-2.0

//! Deterministic derivation of subordinate RNG seeds.

/// SplitMix64 finalizer. A bijection on `u64`.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for slot `(a, b)` under `base`.
///
/// Injective in `(a, b)` for `a, b < 2^32` at fixed `base`.
pub fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    debug_assert!(a < 1 << 32 && b < 1 << 32);
    mix64(
        base.wrapping_add(mix64(base ^ 0x5851_f42d_4c95_7f2d))
            .wrapping_add((a << 32) | b),
    )
}
