//! Per-cell seeds derived by hashing, so that results never depend on the
//! order or parallelism in which cells run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// First eight bytes of `SHA-256(master | method | oracle | run)`.
pub fn derive_seed(master_seed: u64, method: &str, oracle_id: &str, run_index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(master_seed.to_le_bytes());
    for part in [method, oracle_id] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    h.update(run_index.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

pub fn cell_rng(master_seed: u64, method: &str, oracle_id: &str, run_index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master_seed, method, oracle_id, run_index))
}
