//! Per-purpose seed derivation.
//!
//! Every random stream is derived from one root seed:
//! `seed(root, purpose, index) = splitmix64(root ^ splitmix64(tag(purpose) << 32 | index))`,
//! where `tag` is the fixed discriminant of [`Purpose`]. Adding a new purpose
//! never perturbs the streams of existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a derived stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Waveform = 1,
    Channel = 2,
    Noise = 3,
    Init = 4,
    Shuffle = 5,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(root: u64, purpose: Purpose, index: u32) -> u64 {
    let counter = ((purpose as u64) << 32) | u64::from(index);
    splitmix64(root ^ splitmix64(counter))
}

pub fn rng_for(root: u64, purpose: Purpose, index: u32) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, purpose, index))
}
