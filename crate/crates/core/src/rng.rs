//! Counter-based random streams keyed by a master seed and an entity path.
//!
//! A stream is identified by `(master_seed, path)`. Its generator is a ChaCha8
//! instance whose key is the SHA-256 digest of that identity, so the draws a
//! stream produces never depend on which thread evaluates it or on how many
//! other streams were consumed before it.

use std::fmt;

use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;
use sha2::{Digest, Sha256};

const DOMAIN_TAG: &[u8] = b"veritas.rng.v1";

/// One step of a stream path: `(entity-kind, entity-id, replicate-index)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PathLabel {
    pub kind: String,
    pub id: String,
    pub index: u64,
}

/// A named, reproducible source of randomness.
#[derive(Clone)]
pub struct RngStream {
    master_seed: u64,
    path: Vec<PathLabel>,
    // Hasher state after absorbing the seed and every label so far; children
    // only pay for their own label.
    state: Sha256,
}

impl RngStream {
    pub fn new(master_seed: u64) -> Self {
        let mut state = Sha256::new();
        state.update(DOMAIN_TAG);
        state.update(master_seed.to_le_bytes());
        Self {
            master_seed,
            path: Vec::new(),
            state,
        }
    }

    /// Derives the stream one level below this one.
    pub fn child(&self, kind: &str, id: &str, index: u64) -> Self {
        let mut state = self.state.clone();
        absorb(&mut state, kind.as_bytes());
        absorb(&mut state, id.as_bytes());
        state.update(index.to_le_bytes());
        let mut path = Vec::with_capacity(self.path.len() + 1);
        path.extend_from_slice(&self.path);
        path.push(PathLabel {
            kind: kind.to_owned(),
            id: id.to_owned(),
            index,
        });
        Self {
            master_seed: self.master_seed,
            path,
            state,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn path(&self) -> &[PathLabel] {
        &self.path
    }

    /// Materializes the generator for this stream, positioned at its first draw.
    pub fn rng(&self) -> ChaCha8Rng {
        let key: [u8; 32] = self.state.clone().finalize().into();
        ChaCha8Rng::from_seed(key)
    }
}

fn absorb(state: &mut Sha256, bytes: &[u8]) {
    state.update((bytes.len() as u64).to_le_bytes());
    state.update(bytes);
}

impl fmt::Debug for RngStream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RngStream")
            .field("master_seed", &self.master_seed)
            .field("path", &self.path)
            .finish()
    }
}

impl PartialEq for RngStream {
    fn eq(&self, other: &Self) -> bool {
        self.master_seed == other.master_seed && self.path == other.path
    }
}

impl Eq for RngStream {}
