//! Core engine of the culture learning suite.
//!
//! The crate is split along the learning pipeline:
//!
//! - [`domain`]: learner identity, the country → category → lesson → unit
//!   hierarchy and the per-unit progress ladder.
//! - [`ingestion`]: text extraction, normalization, chunking and context-window checks.
//! - [`llm`]: prompt templates, the completion gateway, HTTP and mock providers.
//! - [`treasury`]: summary generation and validation.
//! - [`worldwise`]: quiz generation, the quiz text format and grading.
//! - [`scribe`]: embeddings, the vector store, hybrid retrieval and chat.
//! - [`proficiency`]: engagement telemetry, proficiency scores, recommendations.
//! - [`gamification`]: XP and coin ledgers, badges, streaks, daily challenges, leaderboards.
//!
//! Numeric kernels (embeddings, retrieval scores, proficiency) are generic over
//! [`Scalar`]; the aliases below pin them to `f64` and `f32`.

pub mod domain;
pub mod gamification;
pub mod ingestion;
pub mod llm;
pub mod proficiency;
pub mod scalar;
pub mod scribe;
pub mod treasury;
pub mod worldwise;

pub use scalar::Scalar;

pub type EmbeddingVector64 = scribe::EmbeddingVector<f64>;
pub type EmbeddingVector32 = scribe::EmbeddingVector<f32>;
pub type VectorRecord64 = scribe::VectorRecord<f64>;
pub type ScoredChunk64 = scribe::ScoredChunk<f64>;
pub type ScoredChunk32 = scribe::ScoredChunk<f32>;
pub type VectorStore64 = scribe::VectorStore<f64>;
pub type Scribe64 = scribe::Scribe<f64>;
pub type Scribe32 = scribe::Scribe<f32>;
pub type EngagementStats64 = proficiency::EngagementStats<f64>;
pub type ProficiencyScore64 = proficiency::ProficiencyScore<f64>;
pub type ProficiencyModel64 = proficiency::ProficiencyModel<f64>;
