//! Labeled sub-seeds and noise draws derived from one run seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::latent::LatentVector;

/// First eight bytes of `SHA-256(seed_le || label)`.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

pub fn rng_for(seed: u64, label: &str) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(derive_seed(seed, label))
}

/// Standard normal vector of the given shape from the labeled stream.
pub fn gaussian_noise(shape: &[usize], seed: u64, label: &str) -> Result<LatentVector> {
    let mut rng = rng_for(seed, label);
    let len = shape.iter().product();
    let data = (0..len).map(|_| rng.sample(StandardNormal)).collect();
    LatentVector::new(data, shape.to_vec())
}
