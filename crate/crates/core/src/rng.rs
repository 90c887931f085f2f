//! Reproducible random streams.
//!
//! Every random draw in the library comes from a ChaCha20 stream whose key is
//! derived from `(seed, purpose, index)`. Two streams with different purpose
//! tags or indices are statistically independent, and a stream can be rebuilt
//! at any time without replaying earlier draws. Monte-Carlo trials therefore
//! produce identical results regardless of thread count or execution order.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use crate::types::CVec;

/// Random generator type used throughout the crate.
pub type StreamRng = ChaCha20Rng;

/// Factory for named substreams of a master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Streams {
    seed: u64,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Stream for `purpose`, trial/realization `index`.
    pub fn stream(&self, purpose: &str, index: u64) -> StreamRng {
        let mut hasher = Sha256::new();
        hasher.update(b"irs-crb/stream/v1");
        hasher.update(self.seed.to_le_bytes());
        hasher.update((purpose.len() as u64).to_le_bytes());
        hasher.update(purpose.as_bytes());
        hasher.update(index.to_le_bytes());
        let digest = hasher.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        ChaCha20Rng::from_seed(key)
    }

    /// Derived factory, used to give each sweep point its own seed space.
    pub fn child(&self, purpose: &str, index: u64) -> Streams {
        let mut rng = self.stream(purpose, index);
        Streams { seed: rng.random() }
    }
}

/// One circularly-symmetric complex Gaussian sample with total variance `variance`.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (0.5 * variance).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// Unit-modulus vector with i.i.d. phases uniform on (0, 2π].
pub fn random_phases<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CVec {
    CVec::from_fn(n, |_, _| {
        let phi: f64 = rng.random::<f64>() * std::f64::consts::TAU;
        Complex64::from_polar(1.0, phi)
    })
}
