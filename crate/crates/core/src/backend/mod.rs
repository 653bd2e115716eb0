//! Completion backends.
//!
//! Everything that produces text for a prompt implements [`Backend`]: the
//! HTTP client for chat-completion endpoints, the scripted backend used in
//! tests and examples, and the [`CachedBackend`] decorator that stores
//! responses on disk.

mod cache;
mod config;
mod http;
mod rate_limit;
mod scripted;

pub use cache::{CacheKey, CachedBackend, ResponseCache};
pub use config::{BackendConfig, BackendKind, RetryPolicy};
pub use http::HttpBackend;
pub use rate_limit::TokenBucket;
pub use scripted::{Matcher, ScriptEntry, ScriptedBackend};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DIMENSION_MAX_TOKENS: u32 = 512;
pub const FINAL_MAX_TOKENS: u32 = 768;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackendRequest {
    pub model: String,
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl BackendRequest {
    /// Greedy (temperature 0) request, the setting every chain run uses.
    pub fn greedy(model: impl Into<String>, prompt: impl Into<String>, max_tokens: u32) -> Self {
        Self {
            model: model.into(),
            prompt: prompt.into(),
            temperature: 0.0,
            max_tokens,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(BackendError::InvalidRequest(format!("temperature {} must be >= 0", self.temperature)));
        }
        if self.max_tokens == 0 {
            return Err(BackendError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendResponse {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<Usage>,
    #[serde(default)]
    pub from_cache: bool,
}

impl BackendResponse {
    pub fn text(text: impl Into<String>) -> Self {
        Self { text: text.into(), usage: None, from_cache: false }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    #[error("provider returned HTTP {status}: {body}")]
    ProviderError { status: u16, body: String },
    #[error("request timed out")]
    Timeout,
    #[error("backend unreachable: {0}")]
    Unreachable(String),
    #[error("cache entry {digest} is corrupt: {reason}")]
    CacheCorrupt { digest: String, reason: String },
    #[error("no scripted response matches prompt: {0}")]
    NoScriptedMatch(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("cache io: {0}")]
    Io(String),
}

impl BackendError {
    /// True when the provider could not be contacted at all.
    pub fn is_connectivity(&self) -> bool {
        matches!(self, Self::Unreachable(_) | Self::Timeout)
    }
}

/// A source of completions. Implementations must be safe to call from
/// several worker threads at once.
pub trait Backend: Send + Sync {
    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError>;

    /// Number of requests that reached the underlying provider.
    fn provider_calls(&self) -> u64 {
        0
    }
}

impl<B: Backend + ?Sized> Backend for std::sync::Arc<B> {
    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        (**self).complete(request)
    }

    fn provider_calls(&self) -> u64 {
        (**self).provider_calls()
    }
}

impl<B: Backend + ?Sized> Backend for &B {
    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        (**self).complete(request)
    }

    fn provider_calls(&self) -> u64 {
        (**self).provider_calls()
    }
}
