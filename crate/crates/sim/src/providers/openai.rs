//! Blocking client for OpenAI-compatible `/chat/completions` endpoints.

use std::thread;
use std::time::Duration;

use coalition_core::provider::{ChatRequest, ProviderError, ProviderErrorKind};
use coalition_core::textual::Generator;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpenAiSettings {
    pub base_url: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: String,
    pub timeout_secs: f64,
    pub max_retries: usize,
    /// First backoff delay; doubled after every failed attempt.
    pub backoff_ms: u64,
}

impl Default for OpenAiSettings {
    fn default() -> Self {
        OpenAiSettings {
            base_url: "https://api.openai.com/v1".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            timeout_secs: 60.0,
            max_retries: 3,
            backoff_ms: 1000,
        }
    }
}

pub struct OpenAiGenerator {
    agent: ureq::Agent,
    url: String,
    key: Option<String>,
    settings: OpenAiSettings,
}

impl OpenAiGenerator {
    pub fn new(settings: OpenAiSettings, key: Option<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(settings.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        OpenAiGenerator {
            agent,
            url: format!("{}/chat/completions", settings.base_url.trim_end_matches('/')),
            key,
            settings,
        }
    }

    /// Reads the key from the configured environment variable.
    pub fn from_env(settings: OpenAiSettings) -> Result<Self, ProviderError> {
        let key = std::env::var(&settings.api_key_env).map_err(|_| {
            ProviderError::new(
                ProviderErrorKind::Auth,
                format!("environment variable {} is not set", settings.api_key_env),
            )
        })?;
        Ok(Self::new(settings, Some(key)))
    }

    pub fn payload(request: &ChatRequest) -> Value {
        let mut messages = Vec::new();
        if !request.system.is_empty() {
            messages.push(json!({"role": "system", "content": request.system}));
        }
        messages.push(json!({"role": "user", "content": request.prompt}));
        json!({
            "model": request.model,
            "temperature": request.temperature,
            "messages": messages,
        })
    }

    fn attempt(&self, body: &Value) -> Result<String, ProviderError> {
        let mut req = self.agent.post(&self.url);
        if let Some(k) = &self.key {
            req = req.header("Authorization", &format!("Bearer {k}"));
        }
        let mut resp = req.send_json(body).map_err(transport)?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(transport)?;
        match status {
            200..=299 => first_choice(&text),
            401 | 403 => Err(ProviderError::new(
                ProviderErrorKind::Auth,
                format!("HTTP {status}: {}", snippet(&text)),
            )),
            408 | 429 | 500..=599 => Err(ProviderError::new(
                ProviderErrorKind::Transport,
                format!("HTTP {status}: {}", snippet(&text)),
            )),
            _ => Err(ProviderError::new(
                ProviderErrorKind::Rejected,
                format!("HTTP {status}: {}", snippet(&text)),
            )),
        }
    }
}

fn snippet(s: &str) -> &str {
    let end = s.char_indices().nth(200).map_or(s.len(), |(i, _)| i);
    &s[..end]
}

fn transport(e: ureq::Error) -> ProviderError {
    let kind = match e {
        ureq::Error::Timeout(_) => ProviderErrorKind::Timeout,
        _ => ProviderErrorKind::Transport,
    };
    ProviderError::new(kind, e.to_string())
}

fn first_choice(body: &str) -> Result<String, ProviderError> {
    let v: Value = serde_json::from_str(body).map_err(|e| {
        ProviderError::new(ProviderErrorKind::Malformed, format!("response is not json: {e}"))
    })?;
    v["choices"][0]["message"]["content"]
        .as_str()
        .map(str::to_owned)
        .ok_or_else(|| {
            ProviderError::new(
                ProviderErrorKind::Malformed,
                "response has no choices[0].message.content",
            )
        })
}

impl Generator for OpenAiGenerator {
    fn complete(&mut self, request: &ChatRequest) -> Result<String, ProviderError> {
        let body = Self::payload(request);
        let mut delay = Duration::from_millis(self.settings.backoff_ms);
        let mut attempt = 0;
        loop {
            match self.attempt(&body) {
                Ok(s) => return Ok(s),
                Err(e) if e.is_transient() && attempt < self.settings.max_retries => {
                    log::warn!("chat completion failed ({e}), retrying in {delay:?}");
                    thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
                Err(e) if e.is_transient() => {
                    return Err(ProviderError::new(
                        ProviderErrorKind::Exhausted,
                        format!("gave up after {} attempts: {}", attempt + 1, e.message),
                    ))
                }
                Err(e) => return Err(e),
            }
        }
    }
}
