//! Labelled deterministic random streams.
//!
//! Every random quantity in the crate is drawn from a [`RngStream`], which is a
//! master seed plus a hierarchical string label. The pair is hashed into a
//! ChaCha20 key, so a stream's output depends only on `(seed, label)` and never
//! on the order in which other streams were consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RngStream {
    seed: u64,
    label: String,
}

impl RngStream {
    pub fn new(seed: u64, label: impl Into<String>) -> Self {
        Self {
            seed,
            label: label.into(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Sub-stream `"<label>/<suffix>"` under the same seed.
    pub fn child(&self, suffix: impl AsRef<str>) -> Self {
        let label = if self.label.is_empty() {
            suffix.as_ref().to_owned()
        } else {
            format!("{}/{}", self.label, suffix.as_ref())
        };
        Self {
            seed: self.seed,
            label,
        }
    }

    /// A fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha20Rng {
        let mut hasher = Sha256::new();
        hasher.update(b"facecloak-stream-v1");
        hasher.update(self.seed.to_le_bytes());
        hasher.update((self.label.len() as u64).to_le_bytes());
        hasher.update(self.label.as_bytes());
        let digest = hasher.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        ChaCha20Rng::from_seed(key)
    }
}
