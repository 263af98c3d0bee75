//! Counter-based random streams.
//!
//! Every draw in a simulation is addressed by `(master_seed, trial, step, purpose)`.
//! The address is hashed into a ChaCha seed, so a stream never depends on how many
//! other streams were consumed before it or on the order in which workers ran.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    ThetaStar,
    Effect,
    Features,
    Noise,
    Split,
}

impl Purpose {
    fn tag(self) -> &'static [u8] {
        match self {
            Purpose::ThetaStar => b"theta_star",
            Purpose::Effect => b"effect",
            Purpose::Features => b"features",
            Purpose::Noise => b"noise",
            Purpose::Split => b"split",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamKey {
    pub master_seed: u64,
    pub trial: u64,
    pub step: u64,
    pub purpose: Purpose,
}

impl StreamKey {
    pub fn new(master_seed: u64, trial: u64, step: u64, purpose: Purpose) -> Self {
        Self { master_seed, trial, step, purpose }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(b"perfridge/v1");
        h.update(self.master_seed.to_le_bytes());
        h.update(self.trial.to_le_bytes());
        h.update(self.step.to_le_bytes());
        h.update(self.purpose.tag());
        let digest: [u8; 32] = h.finalize().into();
        ChaCha8Rng::from_seed(digest)
    }
}

/// Shorthand for `StreamKey::new(..).rng()`.
pub fn stream(master_seed: u64, trial: u64, step: u64, purpose: Purpose) -> ChaCha8Rng {
    StreamKey::new(master_seed, trial, step, purpose).rng()
}
