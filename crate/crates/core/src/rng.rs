//! Seeded generators.
//!
//! Every experiment draws from [`GmmRng`], ChaCha with 8 rounds. Per-trial
//! streams are derived from a master seed and the trial index alone, so
//! parallel schedules reproduce sequential ones exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type GmmRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> GmmRng {
    GmmRng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trial `index` under `master`.
pub fn trial_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index))
}

pub fn trial_rng(master: u64, index: u64) -> GmmRng {
    seeded(trial_seed(master, index))
}
