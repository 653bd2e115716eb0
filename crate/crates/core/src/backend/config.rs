use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, CachedBackend, HttpBackend, ResponseCache, ScriptedBackend};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_retries: 5, base_delay_ms: 500, max_delay_ms: 30_000 }
    }
}

impl RetryPolicy {
    /// `base * 2^attempt`, capped at `max_delay_ms`.
    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u64.checked_shl(attempt.min(32)).unwrap_or(u64::MAX);
        Duration::from_millis(self.base_delay_ms.saturating_mul(factor).min(self.max_delay_ms))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Http,
    Scripted,
}

/// Contents of a backend TOML file.
///
/// ```toml
/// kind = "http"
/// url = "https://api.openai.com/v1/chat/completions"
/// model = "gpt-3.5-turbo-0125"
/// api_key_env = "OPENAI_API_KEY"
/// timeout_secs = 60
/// rate_limit_per_minute = 500
/// cache_dir = "cache"
///
/// [retry]
/// max_retries = 5
/// base_delay_ms = 500
/// max_delay_ms = 30000
/// ```
///
/// Relative paths are resolved against the directory holding the file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    #[serde(default)]
    pub kind: BackendKind,
    #[serde(default)]
    pub url: Option<String>,
    pub model: String,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default)]
    pub rate_limit_per_minute: Option<u32>,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub script: Option<PathBuf>,
}

fn default_timeout() -> u64 {
    60
}

impl BackendConfig {
    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path).map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
        let mut config: Self =
            toml::from_str(&text).map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut config.cache_dir, &mut config.script].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    /// Builds the configured backend, wrapped in a response cache when `cache_dir` is set.
    pub fn build(&self) -> Result<Arc<dyn Backend>, BackendError> {
        let inner: Arc<dyn Backend> = match self.kind {
            BackendKind::Http => {
                let url = self
                    .url
                    .clone()
                    .ok_or_else(|| BackendError::Config("http backend needs `url`".into()))?;
                let api_key = match &self.api_key_env {
                    Some(var) => Some(std::env::var(var).map_err(|_| {
                        BackendError::Config(format!("environment variable {var} is not set"))
                    })?),
                    None => None,
                };
                let mut http = HttpBackend::new(url, api_key, Duration::from_secs(self.timeout_secs), self.retry);
                if let Some(rpm) = self.rate_limit_per_minute {
                    http = http.with_rate_limit(rpm);
                }
                Arc::new(http)
            }
            BackendKind::Scripted => {
                let script = self
                    .script
                    .as_ref()
                    .ok_or_else(|| BackendError::Config("scripted backend needs `script`".into()))?;
                Arc::new(ScriptedBackend::from_file(script)?)
            }
        };
        Ok(match &self.cache_dir {
            Some(dir) => Arc::new(CachedBackend::new(inner, ResponseCache::open(dir)?)),
            None => inner,
        })
    }
}
