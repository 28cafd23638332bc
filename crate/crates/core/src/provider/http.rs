//! Generic JSON chat-completion backend.
//!
//! Speaks the common `{model, messages, temperature}` request shape and
//! reads the first choice's message content back. Transient failures
//! (transport errors, 429, 5xx) retry with exponential backoff up to
//! `max_retries`; auth failures are fatal immediately.

use std::time::{Duration, Instant};

use serde::Deserialize;

use super::{ModelRole, Provider, ProviderConfig, ProviderError, TemplateName};

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Debug, Deserialize)]
struct ChoiceMessage {
    content: String,
}

/// Simple token bucket; refills continuously at `per_minute / 60` per second.
#[derive(Debug)]
struct TokenBucket {
    capacity: f64,
    tokens: f64,
    per_second: f64,
    last_refill: Instant,
}

impl TokenBucket {
    fn new(per_minute: u32) -> Self {
        let capacity = f64::from(per_minute.max(1));
        Self {
            capacity,
            tokens: capacity,
            per_second: capacity / 60.0,
            last_refill: Instant::now(),
        }
    }

    fn take(&mut self) {
        loop {
            let now = Instant::now();
            let elapsed = now.duration_since(self.last_refill).as_secs_f64();
            self.last_refill = now;
            self.tokens = (self.tokens + elapsed * self.per_second).min(self.capacity);
            if self.tokens >= 1.0 {
                self.tokens -= 1.0;
                return;
            }
            let wait = (1.0 - self.tokens) / self.per_second;
            std::thread::sleep(Duration::from_secs_f64(wait.min(5.0)));
        }
    }
}

pub struct HttpProvider {
    config: ProviderConfig,
    agent: ureq::Agent,
    bucket: Option<TokenBucket>,
    /// Base backoff; tests shrink this to keep retry paths fast.
    backoff: Duration,
}

impl HttpProvider {
    pub fn new(config: ProviderConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout()))
            .http_status_as_error(false)
            .build()
            .new_agent();
        let bucket = config.requests_per_minute.map(TokenBucket::new);
        Self {
            config,
            agent,
            bucket,
            backoff: Duration::from_millis(500),
        }
    }

    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    fn api_key(&self) -> Result<Option<String>, ProviderError> {
        if self.config.api_key_env.is_empty() {
            return Ok(None);
        }
        match std::env::var(&self.config.api_key_env) {
            Ok(key) if !key.is_empty() => Ok(Some(key)),
            _ => Err(ProviderError::Auth(format!(
                "environment variable {} is unset or empty",
                self.config.api_key_env
            ))),
        }
    }

    fn request_once(&self, model: &str, prompt: &str) -> Result<String, AttemptError> {
        let body = serde_json::json!({
            "model": model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.config.temperature,
        });
        let mut request = self.agent.post(&self.config.endpoint);
        if let Some(key) = self.api_key().map_err(AttemptError::Fatal)? {
            request = request.header("Authorization", format!("Bearer {key}"));
        }
        let mut response = request
            .send_json(&body)
            .map_err(|e| AttemptError::Transient(e.to_string()))?;
        let status = response.status().as_u16();
        match status {
            200..=299 => {}
            401 | 403 => {
                return Err(AttemptError::Fatal(ProviderError::Auth(format!(
                    "endpoint returned HTTP {status}"
                ))))
            }
            _ => return Err(AttemptError::Transient(format!("HTTP {status}"))),
        }
        let parsed: ChatResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| AttemptError::Transient(format!("malformed response body: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| AttemptError::Transient("response had no choices".into()))
    }
}

enum AttemptError {
    Transient(String),
    Fatal(ProviderError),
}

impl Provider for HttpProvider {
    fn complete(
        &mut self,
        _island: Option<crate::policy::IslandId>,
        role: ModelRole,
        _template: TemplateName,
        prompt: &str,
    ) -> Result<String, ProviderError> {
        let model = self.config.model_for(role).to_string();
        let attempts = self.config.max_retries + 1;
        let mut last_error = String::new();
        for attempt in 0..attempts {
            if let Some(bucket) = &mut self.bucket {
                bucket.take();
            }
            match self.request_once(&model, prompt) {
                Ok(text) => return Ok(text),
                Err(AttemptError::Fatal(e)) => return Err(e),
                Err(AttemptError::Transient(e)) => last_error = e,
            }
            if attempt + 1 < attempts {
                std::thread::sleep(self.backoff * 2u32.pow(attempt));
            }
        }
        Err(ProviderError::Unavailable {
            attempts,
            last_error,
        })
    }

    fn is_deterministic(&self) -> bool {
        false
    }
}
