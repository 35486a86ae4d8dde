//! Deterministic random streams derived from a master seed and a path.
//!
//! Every random draw in the crate comes from a stream keyed by
//! `(master_seed, label, indices..)`, so any single result can be regenerated
//! without replaying the draws that preceded it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// A position in the seed-derivation tree.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SeedPath {
    master: u64,
    label: &'static str,
    indices: Vec<u64>,
}

impl SeedPath {
    pub fn new(master: u64, label: &'static str) -> Self {
        Self {
            master,
            label,
            indices: Vec::new(),
        }
    }

    pub fn child(&self, index: u64) -> Self {
        let mut c = self.clone();
        c.indices.push(index);
        c
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.master.to_le_bytes());
        h.update((self.label.len() as u64).to_le_bytes());
        h.update(self.label.as_bytes());
        for i in &self.indices {
            h.update(i.to_le_bytes());
        }
        ChaCha8Rng::from_seed(h.finalize().into())
    }
}

impl std::fmt::Display for SeedPath {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.master, self.label)?;
        for i in &self.indices {
            write!(f, "/{i}")?;
        }
        Ok(())
    }
}

/// Shorthand for `SeedPath::new(master, label)` with indices.
pub fn derive_rng(master: u64, label: &'static str, indices: &[u64]) -> ChaCha8Rng {
    let mut p = SeedPath::new(master, label);
    p.indices.extend_from_slice(indices);
    p.rng()
}
