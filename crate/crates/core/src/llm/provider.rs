//! Chat-completion transport.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::GenerationParams;

pub const API_KEY_ENV: &str = "NCG_LLM_API_KEY";
pub const BASE_URL_ENV: &str = "NCG_LLM_BASE_URL";
pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage { role: "system".into(), content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: "user".into(), content: content.into() }
    }
}

#[derive(Debug, Clone)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub params: GenerationParams,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum ProviderError {
    /// Network failure, timeout, 429 or 5xx. Worth retrying.
    #[error("transient provider failure: {0}")]
    Transient(String),
    /// Any other 4xx, or a response that cannot be understood.
    #[error("provider rejected request (status {status}): {message}")]
    Rejected { status: u16, message: String },
}

/// Something that answers chat-completion requests.
pub trait ChatProvider: Send + Sync {
    fn chat(&self, request: &ChatRequest) -> Result<String, ProviderError>;
}

impl<F> ChatProvider for F
where
    F: Fn(&ChatRequest) -> Result<String, ProviderError> + Send + Sync,
{
    fn chat(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        self(request)
    }
}

/// OpenAI-compatible `POST {base_url}/chat/completions` client.
pub struct HttpProvider {
    base_url: String,
    api_key: String,
    agent: ureq::Agent,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    content: Option<String>,
}

impl HttpProvider {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpProvider { base_url: base_url.into(), api_key: api_key.into(), agent }
    }

    /// Reads the API key and base URL from the environment. `None` when the
    /// key is unset or empty.
    pub fn from_env(base_url_override: Option<&str>, timeout: Duration) -> Option<Self> {
        let key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.trim().is_empty())?;
        let base = base_url_override
            .map(str::to_string)
            .or_else(|| std::env::var(BASE_URL_ENV).ok())
            .unwrap_or_else(|| DEFAULT_BASE_URL.to_string());
        Some(Self::new(base, key, timeout))
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

impl ChatProvider for HttpProvider {
    fn chat(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        let body = WireRequest {
            model: &request.params.model_name,
            messages: &request.messages,
            temperature: request.params.temperature,
            max_tokens: request.params.max_tokens,
            seed: request.params.seed,
        };
        let mut resp = self
            .agent
            .post(&self.endpoint())
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(&body)
            .map_err(|e| ProviderError::Transient(e.to_string()))?;
        let status = resp.status().as_u16();
        if status == 429 || status >= 500 {
            let text = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(ProviderError::Transient(format!("status {status}: {text}")));
        }
        if !(200..300).contains(&status) {
            let message = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(ProviderError::Rejected { status, message });
        }
        let parsed: WireResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| ProviderError::Rejected { status, message: format!("malformed body: {e}") })?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| ProviderError::Rejected { status, message: "response has no content".into() })
    }
}
