//! Completion gateway: prompt templates, provider abstraction, retry and
//! concurrency policy, plus HTTP and deterministic mock providers.

mod gateway;
pub mod http;
pub mod mock;
pub mod templates;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use gateway::{FifoSemaphore, GatewayConfig, LlmGateway, LlmMode, LlmSettings};
pub use templates::{render_chat_prompt, render_quiz_prompt, render_summary_prompt, PromptKind, TemplateError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub model_name: String,
    pub max_tokens: u32,
    pub temperature: f32,
    pub provenance: PromptKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub text: String,
    pub provider_latency_ms: u64,
    pub attempt: u32,
}

/// Failure reported by a provider for a single attempt.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    /// Connection failures, timeouts, 429 and 5xx responses; retried.
    #[error("transient provider failure: {0}")]
    Transient(String),
    /// Any other non-success status; not retried.
    #[error("provider rejected request with status {status}: {message}")]
    Rejected { status: u16, message: String },
    /// A success status whose body could not be read as a completion.
    #[error("malformed provider response: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LlmError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("invalid completion request: {0}")]
    InvalidRequest(String),
    #[error("prompt needs {prompt_tokens} tokens plus {reply_reserve} reserved, window is {window}")]
    ContextOverflow {
        prompt_tokens: usize,
        reply_reserve: usize,
        window: usize,
    },
    #[error("provider unreachable after {attempts} attempts: {last}")]
    ProviderUnreachable { attempts: u32, last: String },
    #[error("provider rejected request (status {status}): {message}")]
    ProviderRejected { status: u16, message: String },
}

pub trait CompletionProvider: Send + Sync {
    fn name(&self) -> &str;

    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError>;
}
