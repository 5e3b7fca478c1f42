use std::fmt;
use std::time::Duration;

use serde_json::{json, Value};

use super::{ApiStyle, BackendConfig, Transport, TransportError, TEMPERATURE};
use crate::prompting::RenderedPrompt;

/// Environment variable holding an optional bearer token.
pub const API_KEY_ENV: &str = "STANCE_API_KEY";

/// Single-attempt client for the open chat/completions JSON protocol.
pub struct HttpTransport {
    agent: ureq::Agent,
    token: Option<String>,
}

impl fmt::Debug for HttpTransport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpTransport")
            .field("token", &self.token.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

impl HttpTransport {
    /// Reads the bearer token from [`API_KEY_ENV`] when set.
    pub fn new(config: &BackendConfig) -> Self {
        let token = std::env::var(API_KEY_ENV).ok().filter(|t| !t.is_empty());
        Self::with_token(config, token)
    }

    pub fn with_token(config: &BackendConfig, token: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Self { agent, token }
    }
}

pub fn endpoint_path(base: &str, style: ApiStyle) -> String {
    let base = base.trim_end_matches('/');
    let suffix = match style {
        ApiStyle::Chat => "chat/completions",
        ApiStyle::Completion => "completions",
    };
    if base.ends_with("/v1") {
        format!("{base}/{suffix}")
    } else {
        format!("{base}/v1/{suffix}")
    }
}

pub fn request_body(config: &BackendConfig, prompt: &str) -> Value {
    match config.api_style {
        ApiStyle::Chat => json!({
            "model": config.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": TEMPERATURE,
            "max_tokens": config.max_tokens,
        }),
        ApiStyle::Completion => json!({
            "model": config.model_name,
            "prompt": prompt,
            "temperature": TEMPERATURE,
            "max_tokens": config.max_tokens,
        }),
    }
}

/// Pulls the completion text out of a response body. A null content field
/// reads as the empty string.
pub fn extract_text(style: ApiStyle, body: &Value) -> Option<String> {
    let choice = body.get("choices")?.get(0)?;
    let text = match style {
        ApiStyle::Chat => choice.get("message")?.get("content")?,
        ApiStyle::Completion => choice.get("text")?,
    };
    match text {
        Value::String(s) => Some(s.clone()),
        Value::Null => Some(String::new()),
        _ => None,
    }
}

fn is_context_overflow(status: u16, body: &str) -> bool {
    if status == 413 {
        return true;
    }
    let body = body.to_lowercase();
    status == 400
        && [
            "context length",
            "context_length",
            "maximum context",
            "too many tokens",
            "prompt is too long",
        ]
        .iter()
        .any(|needle| body.contains(needle))
}

impl Transport for HttpTransport {
    fn send(
        &self,
        config: &BackendConfig,
        prompt: &RenderedPrompt,
    ) -> Result<String, TransportError> {
        let url = endpoint_path(&config.endpoint_url, config.api_style);
        let mut req = self
            .agent
            .post(&url)
            .header("Content-Type", "application/json");
        if let Some(token) = &self.token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = req
            .send_json(request_body(config, &prompt.text))
            .map_err(|e| TransportError::Retryable(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError::Retryable(e.to_string()))?;
        match status {
            200..=299 => {
                let parsed: Value = serde_json::from_str(&body)
                    .map_err(|e| TransportError::Fatal(format!("unparseable response: {e}")))?;
                extract_text(config.api_style, &parsed).ok_or_else(|| {
                    TransportError::Fatal("response has no choices[0] text".to_string())
                })
            }
            s if is_context_overflow(s, &body) => {
                Err(TransportError::ContextLength(format!("HTTP {s}: {body}")))
            }
            408 | 429 | 500..=599 => Err(TransportError::Retryable(format!("HTTP {status}"))),
            _ => Err(TransportError::Fatal(format!("HTTP {status}: {body}"))),
        }
    }
}
