//! Seed derivation for per-item random streams.
//!
//! Every generated item draws from its own ChaCha stream seeded by mixing the
//! pipeline seed with the item index, so worker scheduling never changes output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type ItemRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, salt: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ splitmix64(salt)) ^ index)
}

pub fn item_rng(seed: u64, salt: u64, index: u64) -> ItemRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, salt, index))
}

pub fn seeded(seed: u64) -> ItemRng {
    ChaCha8Rng::seed_from_u64(seed)
}
