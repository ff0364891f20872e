//! Chat-completion provider speaking the common HTTP+JSON protocol:
//! `POST {base}/chat/completions` with `model`, `messages`, `max_tokens` and
//! `temperature`; the reply is read from `choices[0].message.content`.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{CompletionProvider, CompletionRequest, ProviderError};

pub struct HttpProvider {
    endpoint: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

#[derive(Debug, Serialize)]
pub struct WireMessage<'a> {
    pub role: &'a str,
    pub content: &'a str,
}

#[derive(Debug, Serialize)]
pub struct WireRequest<'a> {
    pub model: &'a str,
    pub messages: Vec<WireMessage<'a>>,
    pub max_tokens: u32,
    pub temperature: f32,
}

#[derive(Debug, Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Debug, Deserialize)]
struct WireChoice {
    message: WireReply,
}

#[derive(Debug, Deserialize)]
struct WireReply {
    content: Option<String>,
}

impl WireRequest<'_> {
    pub fn from_request(request: &CompletionRequest) -> WireRequest<'_> {
        WireRequest {
            model: &request.model_name,
            messages: vec![WireMessage {
                role: "user",
                content: &request.prompt,
            }],
            max_tokens: request.max_tokens,
            temperature: request.temperature,
        }
    }
}

impl HttpProvider {
    pub fn new(base_url: &str, api_key: Option<String>) -> Self {
        Self::with_timeout(base_url, api_key, Duration::from_secs(60))
    }

    pub fn with_timeout(base_url: &str, api_key: Option<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        HttpProvider {
            endpoint: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            api_key,
            agent,
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

/// Reads the first choice's text out of a chat-completion response body.
pub fn parse_response(body: &str) -> Result<String, ProviderError> {
    let parsed: WireResponse = serde_json::from_str(body).map_err(|e| ProviderError::Malformed(e.to_string()))?;
    parsed
        .choices
        .into_iter()
        .next()
        .and_then(|c| c.message.content)
        .ok_or_else(|| ProviderError::Malformed("response has no choices".into()))
}

impl CompletionProvider for HttpProvider {
    fn name(&self) -> &str {
        "http"
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        let mut call = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = call
            .send_json(WireRequest::from_request(request))
            .map_err(|e| ProviderError::Transient(e.to_string()))?;
        let status = response.status().as_u16();
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(|e| ProviderError::Transient(e.to_string()))?;
        match status {
            200..=299 => parse_response(&body),
            429 | 500..=599 => Err(ProviderError::Transient(format!("status {status}: {body}"))),
            _ => Err(ProviderError::Rejected { status, message: body }),
        }
    }
}
