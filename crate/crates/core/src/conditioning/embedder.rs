use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

/// Maps text to a fixed-width real vector.
pub trait TextEmbedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Vec<f64>;
}

/// Deterministic unit-norm embedding keyed by a hash of `(namespace, text)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StubEmbedder {
    namespace: String,
    dim: usize,
}

pub fn stub_embedder(namespace: impl Into<String>, dim: usize) -> Result<StubEmbedder> {
    if dim == 0 {
        return Err(Error::Contract("embedding dimension must be at least 1".into()));
    }
    Ok(StubEmbedder { namespace: namespace.into(), dim })
}

impl TextEmbedder for StubEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Vec<f64> {
        let mut hasher = Sha256::new();
        hasher.update(self.namespace.as_bytes());
        hasher.update([0u8]);
        hasher.update(text.as_bytes());
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&hasher.finalize());
        let mut rng = ChaCha8Rng::from_seed(seed);
        loop {
            let v: Vec<f64> = (0..self.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-6 {
                return v.into_iter().map(|x| x / norm).collect();
            }
        }
    }
}
