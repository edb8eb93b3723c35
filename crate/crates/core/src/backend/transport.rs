use std::time::Duration;

use serde_json::Value;

use super::{ErrorBody, Route, TransportError};

/// Sends one protocol request and returns the decoded JSON response.
///
/// Implementations do not retry; retry and in-flight limiting live in
/// [`super::BackendClient`].
pub trait Transport: Send + Sync {
    fn post(&self, route: Route, body: &Value, timeout: Duration) -> Result<Value, TransportError>;
}

/// JSON-over-HTTP transport.
pub struct HttpTransport {
    base_url: String,
    token: Option<String>,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(base_url: impl Into<String>, token: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .build()
            .new_agent();
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            token,
            agent,
        }
    }
}

impl Transport for HttpTransport {
    fn post(&self, route: Route, body: &Value, timeout: Duration) -> Result<Value, TransportError> {
        let url = format!("{}{}", self.base_url, route.path());
        let mut request = self
            .agent
            .post(&url)
            .config()
            .timeout_global(Some(timeout))
            .build()
            .header("Content-Type", "application/json");
        if let Some(token) = &self.token {
            request = request.header("Authorization", format!("Bearer {token}"));
        }
        let mut response = request.send_json(body).map_err(map_ureq_error)?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .with_config()
            .limit(64 * 1024 * 1024)
            .read_to_string()
            .map_err(map_ureq_error)?;
        if status >= 400 {
            return Err(match serde_json::from_str::<ErrorBody>(&text) {
                Ok(b) => TransportError::status(status, b.error.code, b.error.message),
                Err(_) => TransportError::status(status, format!("http_{status}"), text),
            });
        }
        serde_json::from_str(&text).map_err(|e| TransportError::InvalidBody(e.to_string()))
    }
}

fn map_ureq_error(e: ureq::Error) -> TransportError {
    match e {
        ureq::Error::Timeout(_) => TransportError::Timeout,
        other => TransportError::Network(other.to_string()),
    }
}
