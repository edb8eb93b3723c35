use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::BackendError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    #[serde(default = "default_backoff_ms")]
    pub base_backoff_ms: u64,
    #[serde(default = "default_factor")]
    pub factor: f64,
}

fn default_backoff_ms() -> u64 {
    250
}

fn default_factor() -> f64 {
    2.0
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_backoff_ms: default_backoff_ms(),
            factor: default_factor(),
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (1-based).
    pub fn backoff(&self, retry: u32) -> Duration {
        let ms = self.base_backoff_ms as f64 * self.factor.powi(retry.saturating_sub(1) as i32);
        Duration::from_millis(ms.min(60_000.0) as u64)
    }
}

/// Where and how to reach one backend service.
///
/// `base_url` may use the `mock://NAME` scheme to address an in-process
/// deterministic mock instead of an HTTP server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendEndpoint {
    pub base_url: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_token_ref: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
    /// Identifies the model behind the endpoint for cache keys. Defaults to
    /// `base_url`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    /// Expected embedding size, checked on every embedding response.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embed_dim: Option<usize>,
    /// Cache generation responses too.
    #[serde(default)]
    pub cache_generation: bool,
    /// Passed through to the judge route.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge_template_id: Option<String>,
}

fn default_timeout_secs() -> f64 {
    60.0
}

fn default_in_flight() -> usize {
    4
}

impl BackendEndpoint {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            auth_token_ref: None,
            timeout_secs: default_timeout_secs(),
            max_in_flight: default_in_flight(),
            retry: RetryPolicy::default(),
            model_id: None,
            embed_dim: None,
            cache_generation: false,
            judge_template_id: None,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.base_url.trim().is_empty() {
            return Err(BackendError::InvalidRequest("endpoint base_url is empty".into()));
        }
        if self.max_in_flight == 0 {
            return Err(BackendError::InvalidRequest("max_in_flight must be at least 1".into()));
        }
        if self.retry.max_attempts == 0 {
            return Err(BackendError::InvalidRequest("retry.max_attempts must be at least 1".into()));
        }
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(BackendError::InvalidRequest("timeout_secs must be positive".into()));
        }
        if !(self.retry.factor >= 1.0 && self.retry.factor.is_finite()) {
            return Err(BackendError::InvalidRequest("retry.factor must be >= 1".into()));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    pub fn model_key(&self) -> &str {
        self.model_id.as_deref().unwrap_or(&self.base_url)
    }

    /// The mock instance name when `base_url` is `mock://NAME`.
    pub fn mock_name(&self) -> Option<&str> {
        self.base_url.strip_prefix("mock://")
    }

    pub fn resolve_token(&self) -> Option<String> {
        self.auth_token_ref
            .as_deref()
            .and_then(|var| std::env::var(var).ok())
    }
}
