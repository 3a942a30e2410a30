//! Seeded random streams.
//!
//! Every stochastic operation takes an explicit `&mut impl Rng`. Parallel or
//! reorderable work derives its own substream from a master seed plus a key
//! path (device, frame, purpose, ...), so results never depend on scheduling.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type SimRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent stream from `seed` and a key path.
pub fn substream(seed: u64, keys: &[u64]) -> SimRng {
    let mut state = splitmix64(seed);
    for &k in keys {
        state = splitmix64(state ^ splitmix64(k.wrapping_add(0x5851_f42d_4c95_7f2d)));
    }
    SimRng::seed_from_u64(state)
}

pub fn seeded(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Purpose tags used as the last key of a substream path.
pub mod tag {
    pub const SYMBOLS: u64 = 1;
    pub const IMPAIRMENT: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const CHANNEL: u64 = 4;
    pub const SPLIT: u64 = 5;
    pub const INIT: u64 = 6;
    pub const SHUFFLE: u64 = 7;
    pub const SEARCH: u64 = 8;
    pub const EXPERIMENT: u64 = 10;
}

/// Circular complex Gaussian with `E|z|^2 = variance`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * s, im * s)
}

pub fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}
