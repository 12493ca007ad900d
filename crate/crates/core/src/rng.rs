//! Counter-based random streams.
//!
//! A [`CounterRng`] is a pure function of `(key, counter)`: any sample can be
//! produced without touching shared state, so per-pixel noise is identical
//! regardless of how work is split across threads. Keys are derived by
//! hashing a seed with any number of stream labels.
//!
//! Sequential draws that do not need random access (camera paths, parameter
//! sampling) use [`seeded_chacha`] instead.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `labels` into `seed` to produce an independent stream key.
pub fn derive_key(seed: u64, labels: &[u64]) -> u64 {
    labels
        .iter()
        .fold(mix64(seed ^ 0x6A09_E667_F3BC_C909), |acc, &l| {
            mix64(acc ^ mix64(l.wrapping_add(GOLDEN)))
        })
}

/// FNV-1a hash of a label string, for naming streams.
pub fn label(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterRng {
    key: u64,
}

impl CounterRng {
    pub fn new(key: u64) -> Self {
        Self { key }
    }

    pub fn from_labels(seed: u64, labels: &[u64]) -> Self {
        Self::new(derive_key(seed, labels))
    }

    #[inline]
    pub fn bits(&self, counter: u64) -> u64 {
        // Two rounds so that neighbouring keys and counters decorrelate.
        mix64(mix64(self.key ^ counter.wrapping_mul(GOLDEN)).wrapping_add(counter))
    }

    /// Uniform on the open interval (0, 1).
    #[inline]
    pub fn uniform(&self, counter: u64) -> f64 {
        ((self.bits(counter) >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal sample via Box-Muller on two sub-counters.
    #[inline]
    pub fn normal(&self, counter: u64) -> f64 {
        let u1 = self.uniform(counter.wrapping_mul(2));
        let u2 = self.uniform(counter.wrapping_mul(2).wrapping_add(1));
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

/// A ChaCha generator seeded from `(seed, labels)`.
pub fn seeded_chacha(seed: u64, labels: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_key(seed, labels))
}
