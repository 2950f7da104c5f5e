use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

/// Root of all randomness used by a build.
///
/// Streams are derived from `(seed, stream id, key)` by hashing, so the same
/// triple always replays the same sample sequence and distinct sub-mechanisms
/// never share draws. With `zero_noise` set every stream yields exact zeros;
/// outputs produced that way are *not* differentially private.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseSource {
    seed: u64,
    zero_noise: bool,
}

impl NoiseSource {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            zero_noise: false,
        }
    }

    /// A source whose every draw is exactly zero (oracle testing only).
    pub fn zero_noise() -> Self {
        Self {
            seed: 0,
            zero_noise: true,
        }
    }

    pub fn with_zero_noise(seed: u64, zero_noise: bool) -> Self {
        Self { seed, zero_noise }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_zero_noise(&self) -> bool {
        self.zero_noise
    }

    pub fn stream(&self, id: &str) -> NoiseStream {
        self.keyed(id, &[])
    }

    /// A stream bound to `id` and an arbitrary key, e.g. the content of the
    /// string being noised.
    pub fn keyed(&self, id: &str, key: &[u8]) -> NoiseStream {
        let mut h = Sha256::new();
        h.update(b"dpcount/noise/v1");
        h.update(self.seed.to_le_bytes());
        h.update((id.len() as u64).to_le_bytes());
        h.update(id.as_bytes());
        h.update(key);
        let digest: [u8; 32] = h.finalize().into();
        NoiseStream {
            rng: ChaCha20Rng::from_seed(digest),
            zero: self.zero_noise,
        }
    }
}

/// A deterministic sample stream. Not shared across threads.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha20Rng,
    zero: bool,
}

impl NoiseStream {
    pub fn is_zero(&self) -> bool {
        self.zero
    }

    /// Uniform draw on the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.sample(Open01)
    }

    pub(crate) fn rng(&mut self) -> &mut ChaCha20Rng {
        &mut self.rng
    }
}
