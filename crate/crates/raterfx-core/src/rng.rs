//! Seeded random streams.
//!
//! Every stochastic routine in the crate draws from a named PCG generator
//! (`Pcg64Mcg`) seeded through a SplitMix64 mix of (seed, tag, index), so a
//! replicate or simulation unit gets the same substream no matter what order
//! or thread evaluates it.

use rand_core::RngCore;
use rand_pcg::Pcg64Mcg;

pub(crate) fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Deterministic substream for unit `index` of stream `tag` under `seed`.
pub(crate) fn substream(seed: u64, tag: u64, index: u64) -> Pcg64Mcg {
    let lo = mix64(seed ^ mix64(tag));
    let hi = mix64(lo ^ index);
    Pcg64Mcg::new(((hi as u128) << 64) | lo as u128 | 1)
}

/// Uniform draw in [0, 1) with 53 random bits.
pub(crate) fn uniform_f64(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal pair via Box-Muller.
pub(crate) fn normal_pair(rng: &mut impl RngCore) -> (f64, f64) {
    // u1 in (0, 1] so the log is finite.
    let u1 = 1.0 - uniform_f64(rng);
    let u2 = uniform_f64(rng);
    let r = libm::sqrt(-2.0 * libm::log(u1));
    let angle = 2.0 * core::f64::consts::PI * u2;
    (r * libm::cos(angle), r * libm::sin(angle))
}
