//! Deterministic lexical stand-in for the transformer models.
//!
//! Text is lowercased and padded with one space on each side; every
//! character 3-gram is hashed with 64-bit FNV-1a, the hash picks a coordinate
//! (`h % dim`) and a sign (top bit), and the signed counts are L2-normalized.
//! Texts without 3-grams map to the first basis vector.
//!
//! The cross-encoder score of a pair is the cosine of the two stub
//! embeddings plus `0.1` times the Jaccard overlap of their word sets.

use std::collections::HashSet;

use super::{BiEncoder, CrossEncoder, EmbeddingVector, EncoderError, PairScore};
use crate::scalar::Scalar;
use crate::Embedding;

pub const STUB_MODEL_TAG: &str = "stub-3gram-v1";
pub const JACCARD_WEIGHT: f64 = 0.1;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

fn signed_counts(text: &str, dim: usize) -> Vec<i64> {
    let mut counts = vec![0i64; dim];
    let padded: Vec<char> = std::iter::once(' ')
        .chain(text.to_lowercase().chars())
        .chain(std::iter::once(' '))
        .collect();
    let mut buf = [0u8; 12];
    for gram in padded.windows(3) {
        let mut len = 0;
        for c in gram {
            len += c.encode_utf8(&mut buf[len..]).len();
        }
        let h = fnv1a(&buf[..len]);
        let slot = (h % dim as u64) as usize;
        counts[slot] += if h >> 63 == 1 { -1 } else { 1 };
    }
    counts
}

pub fn stub_embed<T: Scalar>(text: &str, dim: usize) -> EmbeddingVector<T> {
    assert!(
        dim >= super::MIN_DIM,
        "stub embedding needs dim >= {}",
        super::MIN_DIM
    );
    let counts = signed_counts(text, dim);
    let sq: i64 = counts.iter().map(|c| c * c).sum();
    let values = if sq == 0 {
        let mut e0 = vec![T::zero(); dim];
        e0[0] = T::one();
        e0
    } else {
        let norm = (sq as f64).sqrt();
        counts
            .iter()
            .map(|&c| T::from_f64(c as f64 / norm).expect("finite"))
            .collect()
    };
    EmbeddingVector::new(values, STUB_MODEL_TAG)
}

fn words(text: &str) -> HashSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn jaccard(a: &str, b: &str) -> f64 {
    let (a, b) = (words(a), words(b));
    let union = a.union(&b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

/// Stub cross-encoder score for one pair.
pub fn stub_pair_score(query: &str, prompt: &str, dim: usize) -> f32 {
    let q = stub_embed::<f64>(query, dim);
    let p = stub_embed::<f64>(prompt, dim);
    let cos: f64 = q.values.iter().zip(&p.values).map(|(a, b)| a * b).sum();
    (cos + JACCARD_WEIGHT * jaccard(query, prompt)) as f32
}

/// Stateless stub serving as both bi-encoder and cross-encoder.
#[derive(Debug, Clone)]
pub struct StubBackend {
    dim: usize,
}

impl StubBackend {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= super::MIN_DIM);
        Self { dim }
    }
}

impl BiEncoder for StubBackend {
    fn dim(&self) -> usize {
        self.dim
    }

    fn model_tag(&self) -> &str {
        STUB_MODEL_TAG
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Embedding>, EncoderError> {
        if texts.is_empty() {
            return Err(EncoderError::EmptyInput);
        }
        Ok(texts.iter().map(|t| stub_embed(t, self.dim)).collect())
    }
}

impl CrossEncoder for StubBackend {
    fn model_tag(&self) -> &str {
        STUB_MODEL_TAG
    }

    fn score_pairs(&self, query: &str, prompts: &[&str]) -> Result<Vec<PairScore>, EncoderError> {
        if prompts.is_empty() {
            return Err(EncoderError::EmptyInput);
        }
        Ok(prompts
            .iter()
            .map(|p| PairScore {
                score: stub_pair_score(query, p, self.dim),
            })
            .collect())
    }
}
