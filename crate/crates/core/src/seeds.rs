//! Domain-separated seeded RNG streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Independent ChaCha stream for `(seed, domain)`.
pub fn stream(seed: u64, domain: &str) -> ChaCha8Rng {
    stream_indexed(seed, domain, 0)
}

/// Independent ChaCha stream for `(seed, domain, index)`.
pub fn stream_indexed(seed: u64, domain: &str, index: u64) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(index.to_le_bytes());
    h.update(domain.as_bytes());
    let digest: [u8; 32] = h.finalize().into();
    ChaCha8Rng::from_seed(digest)
}
