//! Deterministic randomness.
//!
//! Every random draw in the crate comes from xoshiro256++ whose 256-bit state
//! is expanded from a `u64` seed with SplitMix64 (the reference seeding
//! procedure). Independent sub-streams are derived from one master seed by
//! hashing a stream label with FNV-1a, xoring it into the seed and passing the
//! result through one SplitMix64 step.

use rand::{Rng as _, RngCore};
use rand_distr::StandardNormal;
use rand::SeedableRng;
use rand_xoshiro::{SplitMix64, Xoshiro256PlusPlus};

pub type Rng = Xoshiro256PlusPlus;

pub fn seeded(seed: u64) -> Rng {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Seed for the named sub-stream of `master`.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    SplitMix64::seed_from_u64(master ^ fnv1a(label)).next_u64()
}

/// Uniform draw on `[0, 1)` with 53 random bits: `(next_u64 >> 11) * 2^-53`.
#[inline]
pub fn unit_f64(rng: &mut Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn standard_normal(rng: &mut Rng) -> f64 {
    rng.sample(StandardNormal)
}
