//! Order-free seeding for parallel Monte Carlo.
//!
//! Every random stream is addressed by `(master seed, trial, purpose, index)`
//! and derived with a SplitMix64 finalizer, so a trial's randomness never
//! depends on which worker ran it or in which order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a random stream is used for. Distinct purposes never share streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    /// Row `index` of a sampled Wigner matrix.
    MatrixRow,
    /// Redraws of the first row for conditional expectations.
    FirstRowResample,
    /// Random index panels and minor pairs.
    IndexPanel,
    /// Spectral points drawn by the identity suite.
    SpectralPoints,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::MatrixRow => 0x6d61_7472_6978,
            Purpose::FirstRowResample => 0x7265_7361_6d70,
            Purpose::IndexPanel => 0x7061_6e65_6c00,
            Purpose::SpectralPoints => 0x7370_6563_7400,
        }
    }
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Folds `parts` into `master` one word at a time.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(master), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn stream(master: u64, trial: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, &[trial, purpose.tag(), index]))
}
