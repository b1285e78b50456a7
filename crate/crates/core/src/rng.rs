//! Seed derivation for reproducible random streams.
//!
//! Every stream in a run is derived from the single global seed by hashing
//! the seed together with a purpose label and integer coordinates:
//!
//! ```text
//! stream_seed = first 8 bytes (little endian) of
//!     SHA-256( "fedmeta/v1" || seed_le64 || label || 0x00 || coord_0_le64 || coord_1_le64 || ... )
//! ```
//!
//! The derived seed initialises a ChaCha8 generator. Client training in round
//! `r` uses the label `"client"` with coordinates `[client_id, r]`, so a
//! client's randomness depends only on (seed, client, round) and never on the
//! order in which clients are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type SimRng = ChaCha8Rng;

pub fn derive_seed(seed: u64, label: &str, coords: &[u64]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(b"fedmeta/v1");
    hasher.update(seed.to_le_bytes());
    hasher.update(label.as_bytes());
    hasher.update([0u8]);
    for c in coords {
        hasher.update(c.to_le_bytes());
    }
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn stream(seed: u64, label: &str, coords: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(seed, label, coords))
}

/// Stream used by `client_id` during communication round `round`.
pub fn client_stream(seed: u64, client_id: u64, round: u64) -> SimRng {
    stream(seed, "client", &[client_id, round])
}
