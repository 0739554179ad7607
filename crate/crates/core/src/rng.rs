//! Seeded randomness with named stream derivation.
//!
//! Every random decision in the toolkit flows from one root seed. Independent
//! stages derive their own streams by name (`derive_seed(root, "mixup")`),
//! so enabling or disabling one stage never shifts the draws of another.

use rand::SeedableRng;
use sha2::{Digest, Sha256};

/// The PRNG used throughout the toolkit. ChaCha gives identical streams on
/// every platform for a given seed.
pub type Prng = rand_chacha::ChaCha8Rng;

/// Derive a child seed from a root seed and a stream name.
pub fn derive_seed(root: u64, name: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(root.to_le_bytes());
    hasher.update(name.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Construct the named PRNG stream for a root seed.
pub fn derived_rng(root: u64, name: &str) -> Prng {
    Prng::seed_from_u64(derive_seed(root, name))
}
