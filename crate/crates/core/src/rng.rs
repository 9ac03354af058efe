//! Seeded random streams.
//!
//! Every stochastic routine takes a `u64` seed and derives independent
//! ChaCha streams from it, so results never depend on thread scheduling or
//! on which subset of items is processed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream `stream` of the generator seeded with `seed`.
pub fn stream(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream keyed by an opaque identifier such as a stay id.
pub fn stream_for_id(seed: u64, id: &str) -> SimRng {
    stream(seed, fnv1a(id.as_bytes()))
}

/// Mixes a seed with a small integer tag (splitmix64 finalizer).
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Uniform draw in `[0, 1)`.
pub fn uniform(rng: &mut SimRng) -> f64 {
    rng.random::<f64>()
}

pub fn uniform_index(rng: &mut SimRng, n: usize) -> usize {
    rng.random_range(0..n)
}

pub fn coin(rng: &mut SimRng, p_true: f64) -> bool {
    uniform(rng) < p_true
}

/// Standard normal draw (Box-Muller).
pub fn standard_normal(rng: &mut SimRng) -> f64 {
    let u1 = 1.0 - uniform(rng); // (0, 1]
    let u2 = uniform(rng);
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2)
}

/// Index drawn from a cumulative distribution whose last entry is the total mass.
pub fn sample_cumulative(rng: &mut SimRng, cumulative: &[f64]) -> usize {
    let total = *cumulative.last().expect("non-empty distribution");
    let u = uniform(rng) * total;
    let i = cumulative.partition_point(|&c| c <= u);
    i.min(cumulative.len() - 1)
}

/// Index drawn proportionally to non-negative `weights`.
pub fn sample_weighted(rng: &mut SimRng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = uniform(rng) * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    // rounding left u >= last weight; take the last non-zero entry
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(weights.len() - 1)
}
