use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

pub const DEFAULT_DIMENSION: usize = 256;

const STOPWORDS: &[&str] = &[
    "a", "about", "after", "all", "also", "am", "an", "and", "any", "are", "as", "at", "be", "because", "been",
    "before", "being", "but", "by", "can", "could", "did", "do", "does", "for", "from", "had", "has", "have", "he",
    "her", "here", "him", "his", "how", "i", "if", "in", "into", "is", "it", "its", "me", "my", "no", "not", "of",
    "on", "or", "our", "she", "so", "some", "such", "than", "that", "the", "their", "them", "then", "there", "these",
    "they", "this", "those", "to", "too", "us", "very", "was", "we", "were", "what", "when", "where", "which", "while",
    "who", "whom", "why", "will", "with", "would", "you", "your",
];

pub fn is_stopword(term: &str) -> bool {
    STOPWORDS.binary_search(&term).is_ok()
}

/// Lowercased alphanumeric runs with stopwords removed, in text order.
pub fn terms(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .filter(|t| !is_stopword(t))
        .collect()
}

pub fn term_set(text: &str) -> BTreeSet<String> {
    terms(text).into_iter().collect()
}

/// Fixed-length vector with its Euclidean norm cached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector<T> {
    values: Vec<T>,
    norm: T,
}

impl<T: Scalar> EmbeddingVector<T> {
    pub fn new(values: Vec<T>) -> Self {
        let norm = values.iter().fold(T::zero(), |acc, v| acc + *v * *v).sqrt();
        EmbeddingVector { values, norm }
    }

    pub fn zeros(dimension: usize) -> Self {
        EmbeddingVector {
            values: vec![T::zero(); dimension],
            norm: T::zero(),
        }
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> T {
        self.norm
    }

    /// Zero vectors (e.g. from empty or all-stopword text) have no direction.
    pub fn is_degenerate(&self) -> bool {
        self.norm == T::zero()
    }

    pub fn dot(&self, other: &Self) -> T {
        self.values
            .iter()
            .zip(&other.values)
            .fold(T::zero(), |acc, (a, b)| acc + *a * *b)
    }

    /// Cosine similarity clamped to `[-1, 1]`; zero when either side is degenerate.
    pub fn cosine(&self, other: &Self) -> T {
        if self.is_degenerate() || other.is_degenerate() {
            return T::zero();
        }
        let cos = self.dot(other) / (self.norm * other.norm);
        crate::scalar::clamp(cos, -T::one(), T::one())
    }

    /// Little-endian `f64` per component; exact for `f32` and `f64`.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.values.iter().flat_map(|v| v.widen().to_le_bytes()).collect()
    }

    pub fn from_le_bytes(bytes: &[u8]) -> Option<Self> {
        if !bytes.len().is_multiple_of(8) {
            return None;
        }
        let values = bytes
            .chunks_exact(8)
            .map(|b| T::from_f64(f64::from_le_bytes(b.try_into().expect("8-byte chunk"))))
            .collect::<Option<Vec<T>>>()?;
        Some(Self::new(values))
    }
}

pub trait Embedder<T: Scalar>: Send + Sync {
    fn dimension(&self) -> usize;

    fn embed(&self, text: &str) -> EmbeddingVector<T>;
}

/// Term-frequency feature hashing into `dimension` buckets, L2-normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedder {
    dimension: usize,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder::new(DEFAULT_DIMENSION)
    }
}

impl HashEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        HashEmbedder { dimension }
    }

    pub fn bucket(&self, term: &str) -> usize {
        (fnv1a(term.as_bytes()) % self.dimension as u64) as usize
    }
}

/// 64-bit FNV-1a; stable across platforms and runs.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |hash, b| (hash ^ u64::from(*b)).wrapping_mul(PRIME))
}

impl<T: Scalar> Embedder<T> for HashEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> EmbeddingVector<T> {
        let mut counts = vec![T::zero(); self.dimension];
        for term in terms(text) {
            let slot = &mut counts[self.bucket(&term)];
            *slot = *slot + T::one();
        }
        let raw = EmbeddingVector::new(counts);
        if raw.is_degenerate() {
            return EmbeddingVector::zeros(self.dimension);
        }
        let norm = raw.norm;
        EmbeddingVector::new(raw.values.into_iter().map(|v| v / norm).collect())
    }
}
