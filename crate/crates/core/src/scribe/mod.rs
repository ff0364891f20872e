//! Culture Scribe: per-unit vector store, hybrid retrieval and grounded chat.
//!
//! Each chunk is scored against a query with
//!
//! ```text
//! cosine_component  = (1 + cos(query, chunk)) / 2
//! keyword_component = |query_terms ∩ chunk_terms| / |query_terms|   (0 if no query terms)
//! hybrid_score      = alpha * cosine_component + (1 - alpha) * keyword_component
//! ```
//!
//! and results are ordered by `hybrid_score` descending, then chunk ordinal.

mod embed;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use embed::{fnv1a, is_stopword, term_set, terms, Embedder, EmbeddingVector, HashEmbedder, DEFAULT_DIMENSION};

use crate::domain::{ChunkId, UnitId};
use crate::ingestion::Chunk;
use crate::llm::{render_chat_prompt, LlmError, LlmGateway, PromptKind, TemplateError};
use crate::scalar::Scalar;

pub const DEFAULT_K: usize = 4;
pub const DEFAULT_ALPHA: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScribeError {
    #[error("unit {0} has no chunks to index")]
    UnitNotChunked(UnitId),
    #[error("chunk {chunk} does not belong to unit {unit}")]
    ForeignChunk { unit: UnitId, chunk: ChunkId },
    #[error("unit {0} is not indexed")]
    UnitNotIndexed(UnitId),
    #[error("query is empty")]
    EmptyQuery,
    #[error("k must be positive")]
    InvalidK,
    #[error("alpha must lie in [0, 1]")]
    InvalidAlpha,
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorRecord<T> {
    pub chunk_id: ChunkId,
    pub unit_id: UnitId,
    pub text: String,
    pub embedding: EmbeddingVector<T>,
    pub term_set: BTreeSet<String>,
}

impl<T> VectorRecord<T> {
    pub fn ordinal(&self) -> u32 {
        self.chunk_id.ordinal
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredChunk<T> {
    pub chunk_id: ChunkId,
    pub text: String,
    pub cosine_component: T,
    pub keyword_component: T,
    pub hybrid_score: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatAnswer {
    pub answer_text: String,
    pub used_chunk_ids: Vec<ChunkId>,
    pub question: String,
}

/// Records per unit; each unit's record set is swapped as a whole.
pub struct VectorStore<T> {
    units: RwLock<BTreeMap<UnitId, Arc<Vec<VectorRecord<T>>>>>,
}

impl<T> Default for VectorStore<T> {
    fn default() -> Self {
        VectorStore {
            units: RwLock::new(BTreeMap::new()),
        }
    }
}

impl<T: Clone> VectorStore<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Replaces the unit's records in one step; readers see old or new, never a mix.
    pub fn replace_unit(&self, unit: UnitId, records: Vec<VectorRecord<T>>) {
        let records = Arc::new(records);
        self.units
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(unit, records);
    }

    pub fn remove_unit(&self, unit: UnitId) -> bool {
        self.units
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .remove(&unit)
            .is_some()
    }

    pub fn snapshot(&self, unit: UnitId) -> Option<Arc<Vec<VectorRecord<T>>>> {
        self.units.read().unwrap_or_else(|e| e.into_inner()).get(&unit).cloned()
    }

    pub fn record_count(&self, unit: UnitId) -> usize {
        self.snapshot(unit).map_or(0, |r| r.len())
    }

    pub fn export(&self) -> BTreeMap<UnitId, Vec<VectorRecord<T>>> {
        self.units
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .iter()
            .map(|(unit, records)| (*unit, records.as_ref().clone()))
            .collect()
    }
}

/// Vector store plus embedder and scoring defaults.
pub struct Scribe<T> {
    store: VectorStore<T>,
    embedder: Arc<dyn Embedder<T>>,
    alpha: T,
}

impl<T: Scalar> Default for Scribe<T> {
    fn default() -> Self {
        Scribe::new(Arc::new(HashEmbedder::default()))
    }
}

impl<T: Scalar> Scribe<T> {
    pub fn new(embedder: Arc<dyn Embedder<T>>) -> Self {
        Scribe {
            store: VectorStore::new(),
            embedder,
            alpha: T::lit(DEFAULT_ALPHA),
        }
    }

    pub fn with_alpha(mut self, alpha: T) -> Result<Self, ScribeError> {
        check_alpha(alpha)?;
        self.alpha = alpha;
        Ok(self)
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn store(&self) -> &VectorStore<T> {
        &self.store
    }

    pub fn embed(&self, text: &str) -> EmbeddingVector<T> {
        self.embedder.embed(text)
    }

    /// One record per chunk, without touching the store.
    pub fn build_records(&self, unit: UnitId, chunks: &[Chunk]) -> Result<Vec<VectorRecord<T>>, ScribeError> {
        if chunks.is_empty() {
            return Err(ScribeError::UnitNotChunked(unit));
        }
        chunks
            .iter()
            .map(|c| {
                if c.unit_id != unit || c.chunk_id.unit_id != unit {
                    return Err(ScribeError::ForeignChunk {
                        unit,
                        chunk: c.chunk_id,
                    });
                }
                Ok(VectorRecord {
                    chunk_id: c.chunk_id,
                    unit_id: unit,
                    text: c.text.clone(),
                    embedding: self.embedder.embed(&c.text),
                    term_set: term_set(&c.text),
                })
            })
            .collect()
    }

    pub fn index_unit(&self, unit: UnitId, chunks: &[Chunk]) -> Result<usize, ScribeError> {
        let records = self.build_records(unit, chunks)?;
        let count = records.len();
        self.store.replace_unit(unit, records);
        Ok(count)
    }

    pub fn retrieve(&self, unit: UnitId, query: &str, k: usize, alpha: T) -> Result<Vec<ScoredChunk<T>>, ScribeError> {
        check_alpha(alpha)?;
        if k == 0 {
            return Err(ScribeError::InvalidK);
        }
        if query.trim().is_empty() {
            return Err(ScribeError::EmptyQuery);
        }
        let records = self.store.snapshot(unit).ok_or(ScribeError::UnitNotIndexed(unit))?;
        let query_embedding = self.embedder.embed(query);
        let query_terms = term_set(query);

        let mut scored: Vec<(u32, ScoredChunk<T>)> = records
            .iter()
            .map(|r| (r.ordinal(), score(&query_embedding, &query_terms, r, alpha)))
            .collect();
        scored.sort_by(|(oa, a), (ob, b)| {
            b.hybrid_score
                .partial_cmp(&a.hybrid_score)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(oa.cmp(ob))
        });
        scored.truncate(k);
        Ok(scored.into_iter().map(|(_, s)| s).collect())
    }

    /// Retrieves the top `k` chunks with the default alpha and asks the model.
    pub fn chat(
        &self,
        gateway: &LlmGateway,
        unit: UnitId,
        question: &str,
        k: usize,
    ) -> Result<ChatAnswer, ScribeError> {
        let hits = self.retrieve(unit, question, k, self.alpha)?;
        let context: Vec<&str> = hits.iter().map(|h| h.text.as_str()).collect();
        let prompt = render_chat_prompt(&context, question)?;
        let result = gateway.complete_prompt(PromptKind::Chat, prompt)?;
        Ok(ChatAnswer {
            answer_text: result.text,
            used_chunk_ids: hits.iter().map(|h| h.chunk_id).collect(),
            question: question.to_string(),
        })
    }
}

fn check_alpha<T: Scalar>(alpha: T) -> Result<(), ScribeError> {
    if alpha >= T::zero() && alpha <= T::one() {
        Ok(())
    } else {
        Err(ScribeError::InvalidAlpha)
    }
}

fn score<T: Scalar>(
    query: &EmbeddingVector<T>,
    query_terms: &BTreeSet<String>,
    record: &VectorRecord<T>,
    alpha: T,
) -> ScoredChunk<T> {
    let one = T::one();
    let two = one + one;
    let cosine_component = (one + query.cosine(&record.embedding)) / two;
    let keyword_component = if query_terms.is_empty() {
        T::zero()
    } else {
        let shared = query_terms.intersection(&record.term_set).count();
        T::from_count(shared) / T::from_count(query_terms.len())
    };
    ScoredChunk {
        chunk_id: record.chunk_id,
        text: record.text.clone(),
        cosine_component,
        keyword_component,
        hybrid_score: alpha * cosine_component + (one - alpha) * keyword_component,
    }
}
