//! Completion requests against inference endpoints, with greedy decoding,
//! response caching, retries and bounded-parallel batches.

mod cache;
mod http;
mod mock;

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{Cache, CacheKey};
pub use http::{endpoint_path, extract_text, request_body, HttpTransport, API_KEY_ENV};
pub use mock::{prompt_hash, MockScript, MockTransport};

use crate::dispatch::bounded_map;
use crate::prompting::RenderedPrompt;

/// Greedy decoding on the wire.
pub const TEMPERATURE: f64 = 0.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ApiStyle {
    Chat,
    Completion,
}

impl FromStr for ApiStyle {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "chat" => Ok(Self::Chat),
            "completion" | "completions" => Ok(Self::Completion),
            other => Err(format!(
                "unknown api style {other:?} (expected chat or completion)"
            )),
        }
    }
}

/// Connection and dispatch settings. Decoding is always greedy and is not
/// configurable here.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub endpoint_url: String,
    pub model_name: String,
    pub api_style: ApiStyle,
    pub max_tokens: u32,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub parallelism: usize,
    /// First retry delay; doubles on every further retry.
    pub backoff_base_ms: u64,
}

impl BackendConfig {
    pub fn new(endpoint_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            endpoint_url: endpoint_url.into(),
            model_name: model_name.into(),
            api_style: ApiStyle::Chat,
            max_tokens: 256,
            timeout_secs: 120,
            max_retries: 3,
            parallelism: 1,
            backoff_base_ms: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub latency_ms: u64,
    pub from_cache: bool,
}

/// Outcome of one transport attempt that did not yield text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportError {
    /// Worth another attempt (connection failure, 5xx, 429).
    Retryable(String),
    /// The server rejected the prompt as too long.
    ContextLength(String),
    /// Any other rejection; retrying would not help.
    Fatal(String),
}

impl fmt::Display for TransportError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Retryable(m) | Self::ContextLength(m) | Self::Fatal(m) => f.write_str(m),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("backend unavailable after {attempts} attempts: {last}")]
    BackendUnavailable { attempts: u32, last: String },
    #[error("context length exceeded: {0}")]
    ContextLengthExceeded(String),
    #[error("request rejected: {0}")]
    Rejected(String),
    #[error("empty prompt")]
    EmptyPrompt,
}

/// One attempt at turning a prompt into text.
pub trait Transport: Send + Sync {
    fn send(
        &self,
        config: &BackendConfig,
        prompt: &RenderedPrompt,
    ) -> Result<String, TransportError>;
}

/// Retrying, caching front end over a [`Transport`].
pub struct Client {
    config: BackendConfig,
    transport: Arc<dyn Transport>,
    cache: Option<Cache>,
    requests: AtomicUsize,
}

impl fmt::Debug for Client {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Client")
            .field("config", &self.config)
            .field("cache", &self.cache)
            .field("requests", &self.requests)
            .finish()
    }
}

impl Client {
    pub fn new(config: BackendConfig, transport: Arc<dyn Transport>) -> Self {
        Self {
            config,
            transport,
            cache: None,
            requests: AtomicUsize::new(0),
        }
    }

    /// HTTP client for `config.endpoint_url`.
    pub fn http(config: BackendConfig) -> Self {
        let transport = Arc::new(HttpTransport::new(&config));
        Self::new(config, transport)
    }

    pub fn with_cache(mut self, cache: Cache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    /// Transport attempts made so far, including failed ones.
    pub fn requests_sent(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    pub fn complete(&self, prompt: &RenderedPrompt) -> Result<Completion, BackendError> {
        if prompt.text.is_empty() {
            return Err(BackendError::EmptyPrompt);
        }
        let started = Instant::now();
        let key = CacheKey::new(&self.config, &prompt.text);
        if let Some(text) = self.cache.as_ref().and_then(|c| c.get(&key)) {
            return Ok(Completion {
                text,
                latency_ms: 0,
                from_cache: true,
            });
        }
        let attempts = self.config.max_retries + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                let delay = self
                    .config
                    .backoff_base_ms
                    .saturating_mul(1 << (attempt - 1).min(20));
                thread::sleep(Duration::from_millis(delay));
            }
            self.requests.fetch_add(1, Ordering::SeqCst);
            match self.transport.send(&self.config, prompt) {
                Ok(text) => {
                    if let Some(cache) = &self.cache {
                        // a failed cache write only costs a repeat request later
                        let _ = cache.put(&key, &prompt.text, &text);
                    }
                    return Ok(Completion {
                        text,
                        latency_ms: started.elapsed().as_millis() as u64,
                        from_cache: false,
                    });
                }
                Err(TransportError::Retryable(msg)) => last = msg,
                Err(TransportError::ContextLength(msg)) => {
                    return Err(BackendError::ContextLengthExceeded(msg))
                }
                Err(TransportError::Fatal(msg)) => return Err(BackendError::Rejected(msg)),
            }
        }
        Err(BackendError::BackendUnavailable { attempts, last })
    }

    /// Completes every prompt with at most `config.parallelism` in flight.
    /// `out[i]` belongs to `prompts[i]`; failures stay in their slot.
    pub fn run_batch(&self, prompts: &[RenderedPrompt]) -> Vec<Result<Completion, BackendError>> {
        bounded_map(prompts, self.config.parallelism, |p| self.complete(p))
    }
}
