//! Provider-agnostic chat-completion gateway with record/replay cassettes.
//!
//! Every pipeline stage talks to the model through [`Gateway`]. A request is
//! identified by the SHA-256 of its rendered text and generation parameters;
//! in [`GatewayMode::Replay`] that hash is looked up in a [`Cassette`] and the
//! provider is never touched, which keeps the whole pipeline deterministic
//! under test.

pub mod catalog;
mod cassette;
mod provider;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use cassette::{Cassette, CassetteEntry};
pub use catalog::{PromptCatalog, Template};
pub use provider::{
    ChatMessage, ChatProvider, ChatRequest, HttpProvider, ProviderError, API_KEY_ENV,
    BASE_URL_ENV, DEFAULT_BASE_URL,
};

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("cassette miss for template {template_id} (request {request_hash})")]
    CassetteMiss { template_id: String, request_hash: String },
    #[error("unknown prompt template {0:?}")]
    UnknownTemplate(String),
    #[error("template {template_id} has unbound variables: {}", missing.join(", "))]
    UnboundVariables { template_id: String, missing: Vec<String> },
    #[error("template {0} rendered to an empty prompt")]
    EmptyPrompt(String),
    #[error("gateway configuration error: {0}")]
    Configuration(String),
    #[error("provider failed after {attempts} attempts: {message}")]
    Provider { attempts: u32, message: String },
    #[error("cassette error: {0}")]
    Cassette(String),
}

impl GatewayError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, GatewayError::Provider { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationParams {
    pub model_name: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: Option<u64>,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams { model_name: "gpt-4o".into(), temperature: 0.0, max_tokens: 1024, seed: Some(0) }
    }
}

/// A template reference plus its variable bindings.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PromptSpec {
    pub template_id: String,
    pub variables: BTreeMap<String, String>,
    pub system_preamble: Option<String>,
}

impl PromptSpec {
    pub fn new(template_id: impl Into<String>) -> Self {
        PromptSpec { template_id: template_id.into(), ..Default::default() }
    }

    pub fn var(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.variables.insert(name.into(), value.into());
        self
    }

    pub fn system(mut self, preamble: impl Into<String>) -> Self {
        self.system_preamble = Some(preamble.into());
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GatewayMode {
    Live,
    Record,
    #[default]
    Replay,
}

impl std::str::FromStr for GatewayMode {
    type Err = GatewayError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "live" => Ok(GatewayMode::Live),
            "record" => Ok(GatewayMode::Record),
            "replay" => Ok(GatewayMode::Replay),
            other => Err(GatewayError::Configuration(format!("unknown mode {other:?}"))),
        }
    }
}

/// Bounded exponential backoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(8),
        }
    }
}

impl RetryPolicy {
    /// Delay before attempt `attempt + 1`, given that `attempt` (1-based) failed.
    pub fn delay_after(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt.saturating_sub(1)).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

/// Fully rendered request: what is hashed and what reaches the provider.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedRequest {
    pub template_id: String,
    pub system: Option<String>,
    pub prompt: String,
    pub params: GenerationParams,
}

impl RenderedRequest {
    /// SHA-256 over the rendered text and generation parameters.
    pub fn hash(&self) -> String {
        #[derive(Serialize)]
        struct Key<'a> {
            system: Option<&'a str>,
            prompt: &'a str,
            model_name: &'a str,
            temperature: f64,
            max_tokens: u32,
            seed: Option<u64>,
        }
        let key = Key {
            system: self.system.as_deref(),
            prompt: &self.prompt,
            model_name: &self.params.model_name,
            temperature: self.params.temperature,
            max_tokens: self.params.max_tokens,
            seed: self.params.seed,
        };
        let bytes = serde_json::to_vec(&key).expect("hash key serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    fn to_chat(&self) -> ChatRequest {
        let mut messages = Vec::with_capacity(2);
        if let Some(s) = &self.system {
            messages.push(ChatMessage::system(s.clone()));
        }
        messages.push(ChatMessage::user(self.prompt.clone()));
        ChatRequest { messages, params: self.params.clone() }
    }
}

/// A model reply together with the request hash it is filed under.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub request_hash: String,
    pub template_id: String,
    pub from_cassette: bool,
}

/// Counting semaphore bounding in-flight provider calls.
#[derive(Debug)]
struct Semaphore {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn new(n: usize) -> Self {
        Semaphore { permits: Mutex::new(n.max(1)), cv: Condvar::new() }
    }

    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut p = self.permits.lock().expect("semaphore poisoned");
        while *p == 0 {
            p = self.cv.wait(p).expect("semaphore poisoned");
        }
        *p -= 1;
        SemaphoreGuard(self)
    }
}

struct SemaphoreGuard<'a>(&'a Semaphore);

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().expect("semaphore poisoned") += 1;
        self.0.cv.notify_one();
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct GatewayStats {
    /// Provider invocations, including retries.
    pub provider_calls: usize,
    pub cassette_hits: usize,
    pub cassette_appends: usize,
}

pub struct Gateway {
    mode: GatewayMode,
    provider: Option<Arc<dyn ChatProvider>>,
    cassette: Mutex<Cassette>,
    catalog: PromptCatalog,
    retry: RetryPolicy,
    semaphore: Semaphore,
    concurrency: usize,
    provider_calls: AtomicUsize,
    cassette_hits: AtomicUsize,
    cassette_appends: AtomicUsize,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("mode", &self.mode)
            .field("has_provider", &self.provider.is_some())
            .field("concurrency", &self.concurrency)
            .finish()
    }
}

impl Gateway {
    /// Replay-only gateway over a loaded cassette.
    pub fn replay(cassette: Cassette) -> Self {
        Self::builder(GatewayMode::Replay).cassette(cassette).build().expect("replay needs no provider")
    }

    pub fn builder(mode: GatewayMode) -> GatewayBuilder {
        GatewayBuilder {
            mode,
            provider: None,
            cassette: Cassette::new(),
            retry: RetryPolicy::default(),
            concurrency: 4,
        }
    }

    pub fn mode(&self) -> GatewayMode {
        self.mode
    }

    pub fn catalog(&self) -> &PromptCatalog {
        &self.catalog
    }

    pub fn stats(&self) -> GatewayStats {
        GatewayStats {
            provider_calls: self.provider_calls.load(Ordering::SeqCst),
            cassette_hits: self.cassette_hits.load(Ordering::SeqCst),
            cassette_appends: self.cassette_appends.load(Ordering::SeqCst),
        }
    }

    /// Snapshot of the cassette contents.
    pub fn cassette_jsonl(&self) -> String {
        self.cassette.lock().expect("cassette lock").to_jsonl()
    }

    /// Latest timestamp among cassette entries with the given hashes.
    pub fn latest_timestamp<'a>(&self, hashes: impl IntoIterator<Item = &'a str>) -> Option<String> {
        let c = self.cassette.lock().expect("cassette lock");
        hashes.into_iter().filter_map(|h| c.get(h).map(|e| e.timestamp.clone())).max()
    }

    /// Renders the template with its bindings.
    pub fn render_prompt(&self, prompt: &PromptSpec) -> Result<String, GatewayError> {
        render_prompt(&self.catalog, prompt)
    }

    pub fn render_request(
        &self,
        prompt: &PromptSpec,
        params: &GenerationParams,
    ) -> Result<RenderedRequest, GatewayError> {
        Ok(RenderedRequest {
            template_id: prompt.template_id.clone(),
            system: prompt.system_preamble.clone(),
            prompt: self.render_prompt(prompt)?,
            params: params.clone(),
        })
    }

    pub fn complete(&self, prompt: &PromptSpec, params: &GenerationParams) -> Result<Completion, GatewayError> {
        let request = self.render_request(prompt, params)?;
        self.complete_rendered(&request)
    }

    pub fn complete_rendered(&self, request: &RenderedRequest) -> Result<Completion, GatewayError> {
        let hash = request.hash();
        if matches!(self.mode, GatewayMode::Replay | GatewayMode::Record) {
            let cassette = self.cassette.lock().expect("cassette lock");
            if let Some(entry) = cassette.get(&hash) {
                self.cassette_hits.fetch_add(1, Ordering::SeqCst);
                return Ok(Completion {
                    text: entry.response_text.clone(),
                    request_hash: hash,
                    template_id: request.template_id.clone(),
                    from_cassette: true,
                });
            }
            if self.mode == GatewayMode::Replay {
                return Err(GatewayError::CassetteMiss {
                    template_id: request.template_id.clone(),
                    request_hash: hash,
                });
            }
        }

        let text = self.call_provider(request)?;

        if self.mode == GatewayMode::Record {
            let entry = CassetteEntry {
                request_hash: hash.clone(),
                template_id: request.template_id.clone(),
                system: request.system.clone(),
                rendered_prompt: request.prompt.clone(),
                params: request.params.clone(),
                response_text: text.clone(),
                timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            };
            self.cassette.lock().expect("cassette lock").append(entry)?;
            self.cassette_appends.fetch_add(1, Ordering::SeqCst);
        }
        Ok(Completion { text, request_hash: hash, template_id: request.template_id.clone(), from_cassette: false })
    }

    fn call_provider(&self, request: &RenderedRequest) -> Result<String, GatewayError> {
        let provider = self
            .provider
            .as_ref()
            .ok_or_else(|| GatewayError::Configuration("no provider configured".into()))?;
        let chat = request.to_chat();
        let mut attempt = 0;
        loop {
            attempt += 1;
            let result = {
                let _permit = self.semaphore.acquire();
                self.provider_calls.fetch_add(1, Ordering::SeqCst);
                provider.chat(&chat)
            };
            match result {
                Ok(text) => return Ok(text),
                Err(ProviderError::Rejected { status, message }) => {
                    return Err(GatewayError::Configuration(format!(
                        "provider rejected request with status {status}: {message}"
                    )))
                }
                Err(ProviderError::Transient(message)) => {
                    if attempt >= self.retry.max_attempts {
                        return Err(GatewayError::Provider { attempts: attempt, message });
                    }
                    tracing::warn!(attempt, %message, "transient provider failure, retrying");
                    std::thread::sleep(self.retry.delay_after(attempt));
                }
            }
        }
    }

    /// Completes many prompts, at most `concurrency` at a time, preserving
    /// input order in the output.
    pub fn complete_many(
        &self,
        prompts: &[PromptSpec],
        params: &GenerationParams,
    ) -> Vec<Result<Completion, GatewayError>> {
        let workers = self.concurrency.min(prompts.len());
        if workers <= 1 || self.mode == GatewayMode::Replay {
            return prompts.iter().map(|p| self.complete(p, params)).collect();
        }
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<Result<Completion, GatewayError>>>> =
            prompts.iter().map(|_| Mutex::new(None)).collect();
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= prompts.len() {
                        break;
                    }
                    let r = self.complete(&prompts[i], params);
                    *slots[i].lock().expect("slot lock") = Some(r);
                });
            }
        });
        slots
            .into_iter()
            .map(|s| s.into_inner().expect("slot lock").expect("every slot filled"))
            .collect()
    }
}

pub struct GatewayBuilder {
    mode: GatewayMode,
    provider: Option<Arc<dyn ChatProvider>>,
    cassette: Cassette,
    retry: RetryPolicy,
    concurrency: usize,
}

impl GatewayBuilder {
    pub fn provider(mut self, provider: Arc<dyn ChatProvider>) -> Self {
        self.provider = Some(provider);
        self
    }

    pub fn cassette(mut self, cassette: Cassette) -> Self {
        self.cassette = cassette;
        self
    }

    pub fn retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn concurrency(mut self, n: usize) -> Self {
        self.concurrency = n.max(1);
        self
    }

    pub fn build(self) -> Result<Gateway, GatewayError> {
        if self.mode != GatewayMode::Replay && self.provider.is_none() {
            return Err(GatewayError::Configuration(format!(
                "{:?} mode requires a provider (set {API_KEY_ENV})",
                self.mode
            )));
        }
        if self.retry.max_attempts == 0 {
            return Err(GatewayError::Configuration("max_attempts must be at least 1".into()));
        }
        Ok(Gateway {
            mode: self.mode,
            provider: self.provider,
            cassette: Mutex::new(self.cassette),
            catalog: PromptCatalog::default(),
            retry: self.retry,
            semaphore: Semaphore::new(self.concurrency),
            concurrency: self.concurrency,
            provider_calls: AtomicUsize::new(0),
            cassette_hits: AtomicUsize::new(0),
            cassette_appends: AtomicUsize::new(0),
        })
    }
}

/// Renders a prompt against a catalog.
pub fn render_prompt(catalog: &PromptCatalog, prompt: &PromptSpec) -> Result<String, GatewayError> {
    let rendered = catalog.get(&prompt.template_id)?.render(&prompt.variables)?;
    if rendered.trim().is_empty() {
        return Err(GatewayError::EmptyPrompt(prompt.template_id.clone()));
    }
    Ok(rendered)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicU32;

    fn echo() -> Arc<dyn ChatProvider> {
        Arc::new(|req: &ChatRequest| Ok(format!("echo:{}", req.messages.last().unwrap().content)))
    }

    fn prompt(text: &str) -> PromptSpec {
        PromptSpec::new(catalog::PLAIN).var("text", text)
    }

    fn fast_retry(n: u32) -> RetryPolicy {
        RetryPolicy { max_attempts: n, base_delay: Duration::ZERO, max_delay: Duration::ZERO }
    }

    #[test]
    fn record_then_replay_returns_identical_text() {
        let rec = Gateway::builder(GatewayMode::Record).provider(echo()).build().unwrap();
        let params = GenerationParams::default();
        let first = rec.complete(&prompt("hello"), &params).unwrap();
        assert!(!first.from_cassette);
        let cassette = Cassette::from_jsonl(&rec.cassette_jsonl()).unwrap();

        let replay = Gateway::replay(cassette);
        let again = replay.complete(&prompt("hello"), &params).unwrap();
        assert_eq!(again.text, first.text);
        assert_eq!(again.request_hash, first.request_hash);
        assert_eq!(replay.stats().provider_calls, 0);
    }

    #[test]
    fn replay_miss_names_template() {
        let g = Gateway::replay(Cassette::new());
        match g.complete(&prompt("x"), &GenerationParams::default()) {
            Err(GatewayError::CassetteMiss { template_id, .. }) => assert_eq!(template_id, "plain"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn hash_depends_on_params_not_timestamp() {
        let g = Gateway::replay(Cassette::new());
        let a = g.render_request(&prompt("x"), &GenerationParams::default()).unwrap();
        let mut p = GenerationParams::default();
        p.temperature = 0.5;
        let b = g.render_request(&prompt("x"), &p).unwrap();
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), a.clone().hash());
        let sys = g.render_request(&prompt("x").system("be brief"), &GenerationParams::default()).unwrap();
        assert_ne!(a.hash(), sys.hash());
    }

    #[test]
    fn transient_failures_retry_up_to_limit() {
        let calls = Arc::new(AtomicU32::new(0));
        let c = calls.clone();
        let flaky: Arc<dyn ChatProvider> = Arc::new(move |_: &ChatRequest| {
            let n = c.fetch_add(1, Ordering::SeqCst) + 1;
            if n < 3 {
                Err(ProviderError::Transient("503".into()))
            } else {
                Ok("finally".into())
            }
        });
        let g = Gateway::builder(GatewayMode::Live).provider(flaky).retry(fast_retry(3)).build().unwrap();
        assert_eq!(g.complete(&prompt("x"), &GenerationParams::default()).unwrap().text, "finally");
        assert_eq!(calls.load(Ordering::SeqCst), 3);

        let always: Arc<dyn ChatProvider> =
            Arc::new(|_: &ChatRequest| Err(ProviderError::Transient("down".into())));
        let g = Gateway::builder(GatewayMode::Live).provider(always).retry(fast_retry(3)).build().unwrap();
        let err = g.complete(&prompt("x"), &GenerationParams::default()).unwrap_err();
        assert!(matches!(err, GatewayError::Provider { attempts: 3, .. }));
        assert_eq!(g.stats().provider_calls, 3);
    }

    #[test]
    fn success_is_never_resent() {
        let g = Gateway::builder(GatewayMode::Live).provider(echo()).retry(fast_retry(5)).build().unwrap();
        g.complete(&prompt("x"), &GenerationParams::default()).unwrap();
        assert_eq!(g.stats().provider_calls, 1);
    }

    #[test]
    fn client_errors_are_not_retried() {
        let bad: Arc<dyn ChatProvider> = Arc::new(|_: &ChatRequest| {
            Err(ProviderError::Rejected { status: 401, message: "bad key".into() })
        });
        let g = Gateway::builder(GatewayMode::Live).provider(bad).retry(fast_retry(3)).build().unwrap();
        assert!(matches!(
            g.complete(&prompt("x"), &GenerationParams::default()),
            Err(GatewayError::Configuration(_))
        ));
        assert_eq!(g.stats().provider_calls, 1);
    }

    #[test]
    fn live_without_provider_is_configuration_error() {
        assert!(matches!(Gateway::builder(GatewayMode::Live).build(), Err(GatewayError::Configuration(_))));
    }

    #[test]
    fn complete_many_preserves_order_and_bounds_concurrency() {
        let in_flight = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        let (f, p) = (in_flight.clone(), peak.clone());
        let slow: Arc<dyn ChatProvider> = Arc::new(move |req: &ChatRequest| {
            let now = f.fetch_add(1, Ordering::SeqCst) + 1;
            p.fetch_max(now, Ordering::SeqCst);
            std::thread::sleep(Duration::from_millis(5));
            f.fetch_sub(1, Ordering::SeqCst);
            Ok(req.messages[0].content.clone())
        });
        let g = Gateway::builder(GatewayMode::Record).provider(slow).concurrency(3).build().unwrap();
        let prompts: Vec<PromptSpec> = (0..12).map(|i| prompt(&format!("p{i}"))).collect();
        let out = g.complete_many(&prompts, &GenerationParams::default());
        for (i, r) in out.into_iter().enumerate() {
            assert_eq!(r.unwrap().text, format!("p{i}"));
        }
        assert!(peak.load(Ordering::SeqCst) <= 3);
        assert_eq!(g.stats().cassette_appends, 12);
    }

    #[test]
    fn backoff_is_exponential_and_capped() {
        let r = RetryPolicy { max_attempts: 10, base_delay: Duration::from_millis(100), max_delay: Duration::from_millis(350) };
        assert_eq!(r.delay_after(1), Duration::from_millis(100));
        assert_eq!(r.delay_after(2), Duration::from_millis(200));
        assert_eq!(r.delay_after(3), Duration::from_millis(350));
    }
}
