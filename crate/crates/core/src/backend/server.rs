//! Minimal HTTP front end exposing any [`Transport`] over the wire
//! protocol. Used by `serve-mock` and by the HTTP client tests.

use std::io::Read;
use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use serde_json::{json, Value};

use super::{Route, Transport, TransportError};

/// Request bodies above this size are rejected with 413.
pub const MAX_BODY_BYTES: usize = 16 * 1024 * 1024;

pub struct ProtocolServer {
    server: Arc<tiny_http::Server>,
    addr: SocketAddr,
    worker: Option<JoinHandle<()>>,
}

impl ProtocolServer {
    /// Binds `addr` (use port 0 for an ephemeral port) and starts serving.
    pub fn start(addr: &str, backend: Arc<dyn Transport>, model_id: String) -> std::io::Result<Self> {
        let server = tiny_http::Server::http(addr).map_err(std::io::Error::other)?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| std::io::Error::other("server is not bound to an IP address"))?;
        let server = Arc::new(server);
        let accept = server.clone();
        let worker = std::thread::spawn(move || {
            for request in accept.incoming_requests() {
                let backend = backend.clone();
                let model_id = model_id.clone();
                std::thread::spawn(move || respond(request, backend.as_ref(), &model_id));
            }
        });
        Ok(Self {
            server,
            addr,
            worker: Some(worker),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Blocks until the server is shut down from elsewhere.
    pub fn join(mut self) {
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

impl Drop for ProtocolServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

fn respond(mut request: tiny_http::Request, backend: &dyn Transport, model_id: &str) {
    let (status, body) = dispatch(&mut request, backend, model_id);
    let header = tiny_http::Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..]).expect("static header");
    let response = tiny_http::Response::from_string(body.to_string())
        .with_status_code(status)
        .with_header(header);
    let _ = request.respond(response);
}

fn error_body(code: &str, message: &str) -> Value {
    json!({"error": {"code": code, "message": message}})
}

fn dispatch(request: &mut tiny_http::Request, backend: &dyn Transport, model_id: &str) -> (u16, Value) {
    let url = request.url().to_string();
    let path = url.split('?').next().unwrap_or_default();
    if path == "/healthz" {
        let routes: serde_json::Map<String, Value> = Route::ALL
            .iter()
            .map(|r| (r.name().to_string(), Value::String(model_id.to_string())))
            .collect();
        return (200, json!({"status": "ok", "model_ids": routes}));
    }
    let Some(route) = Route::from_path(path) else {
        return (404, error_body("not_found", &format!("no route {path}")));
    };
    if *request.method() != tiny_http::Method::Post {
        return (405, error_body("method_not_allowed", "use POST"));
    }
    let mut raw = Vec::new();
    let read = request
        .as_reader()
        .take(MAX_BODY_BYTES as u64 + 1)
        .read_to_end(&mut raw);
    if read.is_err() {
        return (400, error_body("bad_request", "unreadable body"));
    }
    if raw.len() > MAX_BODY_BYTES {
        return (413, error_body("payload_too_large", "request body exceeds 16 MiB"));
    }
    let body: Value = match serde_json::from_slice(&raw) {
        Ok(v) => v,
        Err(e) => return (400, error_body("bad_request", &format!("malformed JSON: {e}"))),
    };
    match backend.post(route, &body, Duration::from_secs(300)) {
        Ok(v) => (200, v),
        Err(TransportError::Status { status, code, message }) => (status, error_body(&code, &message)),
        Err(TransportError::Timeout) => (504, error_body("timeout", "backend timed out")),
        Err(e) => (502, error_body("upstream", &e.to_string())),
    }
}
