//! Completion backends and the structured prompt/response layer.
//!
//! The engine talks to a model through the [`Provider`] trait: render one of
//! the five prompt templates, ask for a completion, parse the reply with the
//! matching line-oriented grammar. Backends: a generic JSON chat-completion
//! endpoint over HTTP (`native` feature), a scripted mock for tests and
//! replay, and a landscape-aware explorer (see [`crate::explorer`]) for
//! LLM-free simulation.

mod mock;
mod parse;
mod template;

#[cfg(feature = "native")]
mod http;

pub use mock::{MockProvider, ScriptEntry};
pub use parse::{
    parse_capping, parse_classification, parse_generation, parse_selection, parse_summary,
    Classification, ParsedGeneration, ParsedSelection,
};
pub use template::{render, Bindings, TemplateName};

#[cfg(feature = "native")]
pub use http::HttpProvider;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::IslandId;

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("template {template}: unbound placeholder `{placeholder}`")]
    UnboundPlaceholder {
        template: &'static str,
        placeholder: String,
    },
    #[error("response violates the {grammar} grammar: {detail}; offending text: {snippet:?}")]
    Parse {
        grammar: &'static str,
        detail: String,
        snippet: String,
    },
    #[error("mock script has no entry matching a {template} call")]
    ScriptExhausted { template: &'static str },
    #[error("provider authentication failed: {0}")]
    Auth(String),
    #[error("provider unavailable after {attempts} attempt(s): {last_error}")]
    Unavailable { attempts: u32, last_error: String },
    #[error("invalid provider state snapshot: {0}")]
    BadState(String),
}

impl ProviderError {
    pub fn parse(grammar: &'static str, detail: impl Into<String>, text: &str) -> Self {
        let mut snippet: String = text.chars().take(160).collect();
        if text.chars().count() > 160 {
            snippet.push('…');
        }
        Self::Parse {
            grammar,
            detail: detail.into(),
            snippet,
        }
    }

    /// Fatal errors abort the run; everything else skips the iteration.
    pub fn is_fatal(&self) -> bool {
        matches!(self, Self::Auth(_))
    }
}

/// Which configured model serves a call. Generation and selection go to the
/// primary model; classification, summarization, and capping go to the
/// secondary (cheaper) one when configured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelRole {
    Primary,
    Secondary,
}

/// Wire-level settings for an HTTP chat-completion endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub endpoint: String,
    pub model_name: String,
    #[serde(default)]
    pub secondary_model_name: Option<String>,
    /// Name of the environment variable holding the API key; empty means
    /// the endpoint needs no auth.
    #[serde(default)]
    pub api_key_env: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    /// Token-bucket rate limit; `None` disables limiting.
    #[serde(default)]
    pub requests_per_minute: Option<u32>,
}

fn default_timeout_secs() -> u64 {
    120
}

fn default_max_retries() -> u32 {
    3
}

fn default_temperature() -> f64 {
    0.7
}

impl ProviderConfig {
    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }

    pub fn model_for(&self, role: ModelRole) -> &str {
        match role {
            ModelRole::Primary => &self.model_name,
            ModelRole::Secondary => self
                .secondary_model_name
                .as_deref()
                .unwrap_or(&self.model_name),
        }
    }
}

/// A completion backend.
///
/// Implementations must be deterministic given their own serialized state
/// (see [`Provider::snapshot_state`]) for checkpoint/resume replay to hold;
/// the HTTP backend is exempt since resumed live runs are not replays.
pub trait Provider {
    /// `island` identifies the requesting search process; scripted
    /// providers key their internal state on it, network providers
    /// ignore it.
    fn complete(
        &mut self,
        island: Option<IslandId>,
        role: ModelRole,
        template: TemplateName,
        prompt: &str,
    ) -> Result<String, ProviderError>;

    /// Opaque state for checkpointing (consumed mock entries, explorer
    /// cursors). Stateless providers return `None`.
    fn snapshot_state(&self) -> Option<serde_json::Value> {
        None
    }

    fn restore_state(&mut self, _state: &serde_json::Value) -> Result<(), ProviderError> {
        Ok(())
    }

    /// Whether calls are reproducible without external services; drives the
    /// deterministic-clock default.
    fn is_deterministic(&self) -> bool;
}
