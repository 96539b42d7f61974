//! Embedding-based semantic precision/recall/F1 via greedy token matching on
//! a cosine-similarity matrix, over a pluggable embedding provider.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::metrics::PrfScore;
use crate::nn::tensor::dot;

pub trait EmbeddingProvider {
    /// One vector per token, deterministic for a given token sequence.
    fn embed(&self, tokens: &[String]) -> Result<Vec<Vec<f64>>>;

    /// Whether raw cosines can be negative under this provider. When true,
    /// similarities are mapped through `(1 + cos) / 2`.
    fn signed(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemanticScore {
    pub score: PrfScore,
    /// True when similarities were clamped via `(1 + cos) / 2`.
    pub clamped: bool,
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    if a == b {
        // exact self-similarity keeps identical texts at F1 == 1.0
        return 1.0;
    }
    let denom = (dot(a, a) * dot(b, b)).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        dot(a, b) / denom
    }
}

fn greedy_mean_max(from: &[Vec<f64>], to: &[Vec<f64>], clamp: bool) -> f64 {
    let mut total = 0.0;
    for f in from {
        let mut best = f64::NEG_INFINITY;
        for t in to {
            let c = cosine(f, t);
            let sim = if clamp { (1.0 + c) / 2.0 } else { c.max(0.0) };
            if sim > best {
                best = sim;
            }
        }
        total += best;
    }
    total / from.len() as f64
}

/// Greedy matching: precision is the mean over candidate tokens of their best
/// similarity to any reference token, recall the symmetric quantity.
pub fn semantic_score(
    candidate: &[String],
    reference: &[String],
    provider: &dyn EmbeddingProvider,
) -> Result<SemanticScore> {
    if candidate.is_empty() || reference.is_empty() {
        return Err(Error::validation("semantic score needs non-empty texts"));
    }
    let cand = provider.embed(candidate)?;
    let refs = provider.embed(reference)?;
    let clamp = provider.signed();
    let p = greedy_mean_max(&cand, &refs, clamp);
    let r = greedy_mean_max(&refs, &cand, clamp);
    Ok(SemanticScore {
        score: PrfScore::from_pr(p, r),
        clamped: clamp,
    })
}

fn fnv1a_str(s: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in s.as_bytes() {
        hash ^= *byte as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Context-free fallback: each token type maps to a fixed seeded random unit
/// vector. Useful when no trained decoder is on hand.
#[derive(Debug, Clone)]
pub struct StaticHashEmbedding {
    pub dim: usize,
    pub salt: u64,
}

impl Default for StaticHashEmbedding {
    fn default() -> Self {
        StaticHashEmbedding { dim: 64, salt: 0x5eed }
    }
}

impl EmbeddingProvider for StaticHashEmbedding {
    fn embed(&self, tokens: &[String]) -> Result<Vec<Vec<f64>>> {
        Ok(tokens
            .iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(fnv1a_str(t) ^ self.salt);
                let mut v: Vec<f64> = (0..self.dim)
                    .map(|_| {
                        let u1: f64 = rng.random::<f64>().max(1e-12);
                        let u2: f64 = rng.random();
                        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
                    })
                    .collect();
                crate::nn::tensor::l2_normalize(&mut v);
                v
            })
            .collect())
    }
}
