use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use log::warn;
use serde::Deserialize;
use serde_json::json;

use super::{Backend, BackendError, BackendRequest, BackendResponse, RetryPolicy, TokenBucket, Usage};

/// Client for chat-completion style endpoints.
///
/// The whole prompt goes out as a single user message; no system message is
/// sent. Transient failures (connection errors, timeouts, 429 and 5xx) are
/// retried with exponential backoff.
pub struct HttpBackend {
    agent: ureq::Agent,
    url: String,
    api_key: Option<String>,
    retry: RetryPolicy,
    limiter: Option<TokenBucket>,
    calls: AtomicU64,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<ChatUsage>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct ChatUsage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

enum Attempt {
    Done(BackendResponse),
    Retry(BackendError),
    Fail(BackendError),
}

impl HttpBackend {
    pub fn new(url: impl Into<String>, api_key: Option<String>, timeout: Duration, retry: RetryPolicy) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            agent,
            url: url.into(),
            api_key,
            retry,
            limiter: None,
            calls: AtomicU64::new(0),
        }
    }

    pub fn with_rate_limit(mut self, requests_per_minute: u32) -> Self {
        self.limiter = Some(TokenBucket::per_minute(requests_per_minute));
        self
    }

    fn attempt(&self, request: &BackendRequest) -> Attempt {
        if let Some(limiter) = &self.limiter {
            limiter.acquire();
        }
        self.calls.fetch_add(1, Ordering::Relaxed);
        let body = json!({
            "model": request.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let mut req = self.agent.post(&self.url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = match req.send(body.to_string()) {
            Ok(r) => r,
            Err(ureq::Error::Timeout(_)) => return Attempt::Retry(BackendError::Timeout),
            Err(e) => return Attempt::Retry(BackendError::Unreachable(e.to_string())),
        };
        let status = response.status().as_u16();
        let text = match response.body_mut().read_to_string() {
            Ok(t) => t,
            Err(ureq::Error::Timeout(_)) => return Attempt::Retry(BackendError::Timeout),
            Err(e) => return Attempt::Retry(BackendError::Unreachable(e.to_string())),
        };
        if status == 429 || status >= 500 {
            return Attempt::Retry(BackendError::ProviderError { status, body: text });
        }
        if !(200..300).contains(&status) {
            return Attempt::Fail(BackendError::ProviderError { status, body: text });
        }
        match serde_json::from_str::<ChatResponse>(&text) {
            Ok(parsed) => {
                let content = parsed
                    .choices
                    .into_iter()
                    .next()
                    .and_then(|c| c.message.content)
                    .unwrap_or_default();
                Attempt::Done(BackendResponse {
                    text: content,
                    usage: parsed.usage.map(|u| Usage {
                        prompt_tokens: u.prompt_tokens,
                        completion_tokens: u.completion_tokens,
                    }),
                    from_cache: false,
                })
            }
            Err(e) => Attempt::Fail(BackendError::MalformedResponse(e.to_string())),
        }
    }
}

impl Backend for HttpBackend {
    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        request.validate()?;
        let mut attempt = 0u32;
        loop {
            match self.attempt(request) {
                Attempt::Done(r) => return Ok(r),
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(e) => {
                    if attempt >= self.retry.max_retries {
                        return Err(e);
                    }
                    let delay = self.retry.delay(attempt);
                    warn!("transient backend failure ({e}); retry {} in {delay:?}", attempt + 1);
                    std::thread::sleep(delay);
                    attempt += 1;
                }
            }
        }
    }

    fn provider_calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}
