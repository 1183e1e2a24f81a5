//! Pinned integer mixing used wherever results must be reproducible across
//! implementations (block permutation, codebooks, per-trial seed derivation).
//!
//! `mix64` is the splitmix64 finalizer; `SplitMix64` is the matching stream
//! generator (state += 0x9E3779B97F4A7C15, output = mix64(state)).

pub const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }
}

/// Derive a child seed from a parent seed and a path of indices.
pub fn derive_seed(parent: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix64(parent), |acc, &p| {
        mix64(acc ^ mix64(p.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
    })
}
