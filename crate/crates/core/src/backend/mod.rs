//! Clients for the generation, translation, embedding and scoring backends.
//!
//! All capabilities share one JSON-over-HTTP protocol (see [`Route`]).
//! [`BackendClient`] adds retries with exponential backoff, a per-endpoint
//! in-flight bound and a content-addressed [`ResponseCache`]. Generation
//! responses bypass the cache unless the endpoint opts in.

mod cache;
mod client;
mod endpoint;
mod error;
mod limiter;
pub mod mock;
mod protocol;
mod server;
mod transport;

use std::sync::Arc;

pub use cache::{canonical_json, sha256_hex, write_atomic, CacheKey, CacheStats, ResponseCache};
pub use client::{BackendClient, ClientStats};
pub use endpoint::{BackendEndpoint, RetryPolicy};
pub use error::{BackendError, TransportError};
pub use limiter::{InFlightLimiter, Permit};
pub use mock::{InjectedFailure, MockBackend, MockRegistry};
pub use protocol::*;
pub use server::{ProtocolServer, MAX_BODY_BYTES};
pub use transport::{HttpTransport, Transport};

/// Picks the transport for an endpoint: `mock://NAME` resolves through
/// `mocks`, anything else is HTTP.
pub fn transport_for(endpoint: &BackendEndpoint, mocks: &MockRegistry) -> Arc<dyn Transport> {
    match endpoint.mock_name() {
        Some(name) => mocks.get_or_default(name),
        None => Arc::new(HttpTransport::new(endpoint.base_url.clone(), endpoint.resolve_token())),
    }
}
