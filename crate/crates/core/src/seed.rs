//! Deterministic seed fan-out.
//!
//! Every random stream in the crate is derived from one master seed and a
//! purpose label, so a whole pipeline run is reproducible bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// One step of the splitmix64 generator (Steele, Lea & Flood).
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for `label` under `master`.
pub fn child_seed(master: u64, label: &str) -> u64 {
    label
        .bytes()
        .fold(splitmix64(master), |h, b| splitmix64(h ^ u64::from(b)))
}

/// Child seed for an indexed replicate, e.g. `("mcmc", 3)`.
pub fn indexed_seed(master: u64, label: &str, index: u64) -> u64 {
    splitmix64(child_seed(master, label) ^ splitmix64(index))
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
