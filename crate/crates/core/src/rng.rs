//! Seed derivation.
//!
//! Every random quantity is drawn from a ChaCha8 generator keyed by the
//! invocation's root seed, with the ChaCha stream id chosen from a path of
//! labels (`[component, index, ...]`). Because ChaCha is counter based, each
//! path addresses an independent stream and results do not depend on the
//! order in which replications are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Component labels used as the first element of a derivation path.
pub mod label {
    pub const CRITVAL_OPEN: u64 = 1;
    pub const CRITVAL_CLOSED: u64 = 2;
    pub const CRITVAL_POWER: u64 = 3;
    pub const DATAGEN: u64 = 4;
    pub const TRAIN: u64 = 5;
    pub const INIT: u64 = 6;
    pub const SPLIT: u64 = 7;
    pub const EXPERIMENT: u64 = 8;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash a derivation path into a single 64-bit stream id.
pub fn path_id(path: &[u64]) -> u64 {
    path.iter()
        .fold(0x6A09_E667_F3BC_C908, |acc, &p| splitmix(acc ^ splitmix(p)))
}

/// Generator for `path` under `root`.
pub fn derive(root: u64, path: &[u64]) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(path_id(path));
    rng
}

/// A child seed, for APIs that take a plain `u64` seed.
pub fn child_seed(root: u64, path: &[u64]) -> u64 {
    splitmix(root ^ path_id(path))
}
