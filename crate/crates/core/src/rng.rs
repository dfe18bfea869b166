//! Seeded counter-mode generators.
//!
//! Every random object in the crate is drawn from a ChaCha stream keyed by a
//! 64-bit seed, with a separate stream id per purpose so that two objects
//! built from the same seed never share randomness.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type SeededRng = ChaCha20Rng;

pub fn seeded(seed: u64, stream: u64) -> SeededRng {
    let mut r = ChaCha20Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Mixes a seed with a tag (splitmix64 finaliser) to get an independent child seed.
pub fn derive(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn normal(rng: &mut SeededRng) -> f64 {
    rng.sample(StandardNormal)
}

/// Uniform draw in the open interval (0, 1).
pub fn open01(rng: &mut SeededRng) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

pub fn sign(rng: &mut SeededRng) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

pub fn index(rng: &mut SeededRng, n: usize) -> usize {
    rng.random_range(0..n)
}

/// Runs `f` with `seed`, and once more with a derived seed if it reports rank deficiency.
pub(crate) fn with_reseed<T>(seed: u64, mut f: impl FnMut(u64) -> Result<T>) -> Result<T> {
    match f(seed) {
        Err(Error::RankDeficient(_)) => f(derive(seed, 0x5eed)),
        other => other,
    }
}
