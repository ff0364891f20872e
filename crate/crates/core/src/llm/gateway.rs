use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use super::http::HttpProvider;
use super::mock::MockProvider;
use super::{CompletionProvider, CompletionRequest, CompletionResult, LlmError, PromptKind, ProviderError};
use crate::ingestion::{fits_context, CharHeuristic, TokenEstimator, DEFAULT_REPLY_RESERVE};

#[derive(Debug, Clone, PartialEq)]
pub struct GatewayConfig {
    pub model: String,
    pub context_window: usize,
    /// Tokens kept free for the reply; also the `max_tokens` of every request.
    pub reply_reserve: usize,
    pub max_retries: u32,
    /// Delay before retry `k` (0-based) is `backoff_base * 2^k`.
    pub backoff_base: Duration,
    pub max_concurrent: usize,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            model: "llama3-8b-8192".to_string(),
            context_window: 8192,
            reply_reserve: DEFAULT_REPLY_RESERVE,
            max_retries: 3,
            backoff_base: Duration::from_millis(500),
            max_concurrent: 4,
        }
    }
}

impl GatewayConfig {
    pub fn temperature(kind: PromptKind) -> f32 {
        match kind {
            PromptKind::Summary => 0.7,
            PromptKind::Quiz | PromptKind::Chat => 0.2,
        }
    }
}

/// Counting semaphore that admits waiters strictly in arrival order.
pub struct FifoSemaphore {
    state: Mutex<FifoState>,
    turn: Condvar,
}

struct FifoState {
    next_ticket: u64,
    now_serving: u64,
    available: usize,
}

pub struct Permit<'a> {
    sem: &'a FifoSemaphore,
}

impl FifoSemaphore {
    pub fn new(permits: usize) -> Self {
        FifoSemaphore {
            state: Mutex::new(FifoState {
                next_ticket: 0,
                now_serving: 0,
                available: permits.max(1),
            }),
            turn: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut state = self.state.lock().unwrap_or_else(|e| e.into_inner());
        let ticket = state.next_ticket;
        state.next_ticket += 1;
        while !(state.now_serving == ticket && state.available > 0) {
            state = self.turn.wait(state).unwrap_or_else(|e| e.into_inner());
        }
        state.now_serving += 1;
        state.available -= 1;
        self.turn.notify_all();
        Permit { sem: self }
    }

    pub fn available(&self) -> usize {
        self.state.lock().unwrap_or_else(|e| e.into_inner()).available
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut state = self.sem.state.lock().unwrap_or_else(|e| e.into_inner());
        state.available += 1;
        self.sem.turn.notify_all();
    }
}

/// Shared entry point for every completion call.
pub struct LlmGateway {
    provider: Arc<dyn CompletionProvider>,
    estimator: Arc<dyn TokenEstimator>,
    config: GatewayConfig,
    permits: FifoSemaphore,
}

impl LlmGateway {
    pub fn new(provider: Arc<dyn CompletionProvider>, config: GatewayConfig) -> Self {
        let permits = FifoSemaphore::new(config.max_concurrent);
        LlmGateway {
            provider,
            estimator: Arc::new(CharHeuristic),
            config,
            permits,
        }
    }

    pub fn with_estimator(mut self, estimator: Arc<dyn TokenEstimator>) -> Self {
        self.estimator = estimator;
        self
    }

    pub fn mock() -> Self {
        LlmGateway::new(Arc::new(MockProvider::new()), GatewayConfig::default())
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn provider_name(&self) -> &str {
        self.provider.name()
    }

    pub fn estimate(&self, text: &str) -> usize {
        self.estimator.estimate(text)
    }

    /// Whether `prompt` leaves room for the reply inside the model window.
    pub fn fits(&self, prompt: &str) -> bool {
        fits_context(
            self.estimate(prompt),
            self.config.context_window,
            self.config.reply_reserve,
        )
    }

    /// Builds a request with the per-kind defaults.
    pub fn request(&self, kind: PromptKind, prompt: String) -> CompletionRequest {
        CompletionRequest {
            prompt,
            model_name: self.config.model.clone(),
            max_tokens: self.config.reply_reserve.min(u32::MAX as usize) as u32,
            temperature: GatewayConfig::temperature(kind),
            provenance: kind,
        }
    }

    pub fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, LlmError> {
        if request.prompt.is_empty() {
            return Err(LlmError::InvalidRequest("prompt is empty".into()));
        }
        if request.max_tokens == 0 {
            return Err(LlmError::InvalidRequest("max_tokens must be positive".into()));
        }
        if !(0.0..=2.0).contains(&request.temperature) {
            return Err(LlmError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                request.temperature
            )));
        }
        let prompt_tokens = self.estimate(&request.prompt);
        if !fits_context(prompt_tokens, self.config.context_window, self.config.reply_reserve) {
            return Err(LlmError::ContextOverflow {
                prompt_tokens,
                reply_reserve: self.config.reply_reserve,
                window: self.config.context_window,
            });
        }

        let _permit = self.permits.acquire();
        let attempts = self.config.max_retries + 1;
        let mut last = String::new();
        for attempt in 1..=attempts {
            let started = Instant::now();
            match self.provider.complete(request) {
                Ok(text) => {
                    return Ok(CompletionResult {
                        text,
                        provider_latency_ms: started.elapsed().as_millis() as u64,
                        attempt,
                    })
                }
                Err(ProviderError::Transient(message)) => {
                    last = message;
                    if attempt < attempts {
                        std::thread::sleep(self.config.backoff_base * 2u32.saturating_pow(attempt - 1));
                    }
                }
                Err(ProviderError::Rejected { status, message }) => {
                    return Err(LlmError::ProviderRejected { status, message })
                }
                Err(ProviderError::Malformed(message)) => {
                    return Err(LlmError::ProviderRejected { status: 200, message })
                }
            }
        }
        Err(LlmError::ProviderUnreachable { attempts, last })
    }

    /// `request` followed by `complete`.
    pub fn complete_prompt(&self, kind: PromptKind, prompt: String) -> Result<CompletionResult, LlmError> {
        let request = self.request(kind, prompt);
        self.complete(&request)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LlmMode {
    Live,
    Mock,
}

/// `LLM_*` configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct LlmSettings {
    pub mode: LlmMode,
    pub base_url: String,
    pub api_key: Option<String>,
    pub gateway: GatewayConfig,
}

impl LlmSettings {
    pub fn from_env() -> Result<Self, String> {
        Self::from_lookup(|key| std::env::var(key).ok())
    }

    pub fn from_lookup(lookup: impl Fn(&str) -> Option<String>) -> Result<Self, String> {
        let mode = match lookup("LLM_MODE").as_deref().map(str::trim) {
            None | Some("") | Some("mock") => LlmMode::Mock,
            Some("live") => LlmMode::Live,
            Some(other) => return Err(format!("LLM_MODE must be `live` or `mock`, got `{other}`")),
        };
        let mut gateway = GatewayConfig::default();
        if let Some(model) = lookup("LLM_MODEL").filter(|m| !m.trim().is_empty()) {
            gateway.model = model;
        }
        if let Some(window) = lookup("LLM_CONTEXT_WINDOW") {
            gateway.context_window = window
                .trim()
                .parse()
                .map_err(|_| format!("LLM_CONTEXT_WINDOW is not a token count: `{window}`"))?;
        }
        let base_url = lookup("LLM_BASE_URL").unwrap_or_else(|| "https://api.groq.com/openai/v1".to_string());
        if mode == LlmMode::Live && base_url.trim().is_empty() {
            return Err("LLM_BASE_URL is required in live mode".into());
        }
        Ok(LlmSettings {
            mode,
            base_url,
            api_key: lookup("LLM_API_KEY").filter(|k| !k.is_empty()),
            gateway,
        })
    }

    pub fn build_gateway(&self) -> LlmGateway {
        let provider: Arc<dyn CompletionProvider> = match self.mode {
            LlmMode::Mock => Arc::new(MockProvider::new()),
            LlmMode::Live => Arc::new(HttpProvider::new(&self.base_url, self.api_key.clone())),
        };
        LlmGateway::new(provider, self.gateway.clone())
    }
}
