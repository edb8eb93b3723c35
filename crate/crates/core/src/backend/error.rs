use std::fmt;

use super::Route;

/// Failure of one transport attempt, before retry handling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportError {
    /// The server answered with an error status and protocol error body.
    Status { status: u16, code: String, message: String },
    /// Connection-level failure (refused, reset, DNS).
    Network(String),
    Timeout,
    /// The server answered 2xx but the body was not JSON.
    InvalidBody(String),
}

impl TransportError {
    pub fn status(status: u16, code: impl Into<String>, message: impl Into<String>) -> Self {
        TransportError::Status {
            status,
            code: code.into(),
            message: message.into(),
        }
    }

    pub fn is_retryable(&self) -> bool {
        match self {
            TransportError::Network(_) | TransportError::Timeout => true,
            TransportError::Status { status, .. } => *status == 429 || *status >= 500,
            TransportError::InvalidBody(_) => false,
        }
    }
}

impl fmt::Display for TransportError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransportError::Status { status, code, message } => write!(f, "HTTP {status} {code}: {message}"),
            TransportError::Network(m) => write!(f, "network error: {m}"),
            TransportError::Timeout => f.write_str("request timed out"),
            TransportError::InvalidBody(m) => write!(f, "invalid response body: {m}"),
        }
    }
}

impl std::error::Error for TransportError {}

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("invalid language pair: source and target are both {0:?}")]
    InvalidLanguagePair(String),
    #[error("{route}: network failure after {attempts} attempt(s): {message}")]
    Network { route: Route, attempts: u32, message: String },
    #[error("{route}: timed out after {attempts} attempt(s)")]
    Timeout { route: Route, attempts: u32 },
    #[error("{route}: upstream error {status} {code}: {message}")]
    Upstream {
        route: Route,
        status: u16,
        code: String,
        message: String,
    },
    #[error("generation refused by backend: {0}")]
    ContentRefused(String),
    #[error("response schema violation: {0}")]
    Schema(String),
    #[error("backend returned an empty translation")]
    EmptyTranslation,
    #[error("expected {expected} paraphrases, backend returned {got}")]
    TooFewParaphrases { expected: usize, got: usize },
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("embedding dimension {got} does not match declared dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("unparseable judge verdict {0:?}")]
    UnparseableVerdict(String),
    #[error("no endpoint routed for {0}")]
    MissingRoute(String),
    #[error("cache error: {0}")]
    Cache(String),
}

impl BackendError {
    pub(crate) fn from_transport(route: Route, attempts: u32, err: TransportError) -> Self {
        match err {
            TransportError::Status { code, message, .. } if code == "content_refused" => {
                BackendError::ContentRefused(message)
            }
            TransportError::Status { status, code, message } => BackendError::Upstream {
                route,
                status,
                code,
                message,
            },
            TransportError::Network(message) => BackendError::Network { route, attempts, message },
            TransportError::Timeout => BackendError::Timeout { route, attempts },
            TransportError::InvalidBody(m) => BackendError::Schema(m),
        }
    }
}
