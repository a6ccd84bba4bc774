//! Wire-protocol client for external classifier and NER backends.
//!
//! One request shape serves both tasks: an HTTP POST whose JSON body is
//! `{"task": "calltype"|"ner", "request_id": str, "inputs": [str...]}` and
//! whose response is `{"request_id": str, "outputs": [...]}`. The client
//! validates the envelope (request-id echo, output count) and leaves
//! task-specific decoding to the calling module. Failed transports and 5xx
//! responses are retried with exponential backoff; every retry reuses the
//! same request id so backends can deduplicate.

use std::io::{Read, Write};
use std::net::TcpStream;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("protocol: {0}")]
    Protocol(String),
}

#[derive(Serialize)]
struct RequestEnvelope<'a> {
    task: &'a str,
    request_id: &'a str,
    inputs: &'a [String],
}

#[derive(Deserialize)]
struct ResponseEnvelope {
    request_id: String,
    outputs: Vec<serde_json::Value>,
}

/// Parsed `http://host:port/path` endpoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Endpoint {
    pub host: String,
    pub port: u16,
    pub path: String,
}

impl Endpoint {
    /// Only plain `http` is supported; backends live on trusted local
    /// networks in this pipeline.
    pub fn parse(url: &str) -> Result<Endpoint, BackendError> {
        let rest = url
            .strip_prefix("http://")
            .ok_or_else(|| BackendError::Transport(format!("endpoint must be http://, got {url:?}")))?;
        let (authority, path) = match rest.find('/') {
            Some(slash) => (&rest[..slash], &rest[slash..]),
            None => (rest, "/"),
        };
        let (host, port) = match authority.rsplit_once(':') {
            Some((host, port)) => {
                let port: u16 = port
                    .parse()
                    .map_err(|_| BackendError::Transport(format!("bad port in {url:?}")))?;
                (host, port)
            }
            None => (authority, 80),
        };
        if host.is_empty() {
            return Err(BackendError::Transport(format!("empty host in {url:?}")));
        }
        Ok(Endpoint {
            host: host.to_string(),
            port,
            path: path.to_string(),
        })
    }
}

/// Client for one backend endpoint.
pub struct BackendClient {
    endpoint: Endpoint,
    max_attempts: u32,
    base_backoff: Duration,
    timeout: Duration,
}

impl BackendClient {
    pub fn new(url: &str) -> Result<BackendClient, BackendError> {
        Ok(BackendClient {
            endpoint: Endpoint::parse(url)?,
            max_attempts: 3,
            base_backoff: Duration::from_millis(100),
            timeout: Duration::from_secs(30),
        })
    }

    pub fn with_retry(mut self, max_attempts: u32, base_backoff: Duration) -> Self {
        self.max_attempts = max_attempts.max(1);
        self.base_backoff = base_backoff;
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    /// Send one batch and return its outputs, order-preserving. Retries keep
    /// the request id, so at most one logical request reaches the backend.
    pub fn request(
        &self,
        task: &str,
        inputs: &[String],
    ) -> Result<Vec<serde_json::Value>, BackendError> {
        let request_id = uuid::Uuid::new_v4().to_string();
        let envelope = RequestEnvelope {
            task,
            request_id: &request_id,
            inputs,
        };
        let body = serde_json::to_vec(&envelope)
            .map_err(|e| BackendError::Protocol(format!("encoding request: {e}")))?;

        let mut last_error = None;
        for attempt in 0..self.max_attempts {
            if attempt > 0 {
                std::thread::sleep(self.base_backoff * 2u32.pow(attempt - 1));
            }
            match self.attempt(&body) {
                Ok(raw) => return decode_response_envelope(&raw, &request_id, inputs.len()),
                Err(Retryable::Yes(err)) => last_error = Some(err),
                Err(Retryable::No(err)) => return Err(err),
            }
        }
        Err(last_error.unwrap_or_else(|| BackendError::Transport("no attempts made".to_string())))
    }

    fn attempt(&self, body: &[u8]) -> Result<Vec<u8>, Retryable> {
        let address = (self.endpoint.host.as_str(), self.endpoint.port);
        let mut stream = TcpStream::connect(address)
            .map_err(|e| Retryable::Yes(BackendError::Transport(format!("connect: {e}"))))?;
        stream
            .set_read_timeout(Some(self.timeout))
            .and_then(|()| stream.set_write_timeout(Some(self.timeout)))
            .map_err(|e| Retryable::Yes(BackendError::Transport(format!("socket: {e}"))))?;

        let header = format!(
            "POST {} HTTP/1.1\r\nHost: {}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
            self.endpoint.path,
            self.endpoint.host,
            body.len()
        );
        stream
            .write_all(header.as_bytes())
            .and_then(|()| stream.write_all(body))
            .map_err(|e| Retryable::Yes(BackendError::Transport(format!("send: {e}"))))?;

        let mut raw = Vec::new();
        stream
            .read_to_end(&mut raw)
            .map_err(|e| Retryable::Yes(BackendError::Transport(format!("receive: {e}"))))?;

        let (status, response_body) = parse_http_response(&raw).map_err(Retryable::No)?;
        match status {
            200 => Ok(response_body),
            500..=599 => Err(Retryable::Yes(BackendError::Protocol(format!(
                "server error {status}"
            )))),
            other => Err(Retryable::No(BackendError::Protocol(format!(
                "unexpected status {other}"
            )))),
        }
    }
}

enum Retryable {
    Yes(BackendError),
    No(BackendError),
}

/// Parse a raw HTTP/1.1 response into status code and body. Honors
/// `Content-Length` when present and otherwise takes everything after the
/// header block (the client always requests `Connection: close`).
pub fn parse_http_response(raw: &[u8]) -> Result<(u16, Vec<u8>), BackendError> {
    let header_end = raw
        .windows(4)
        .position(|w| w == b"\r\n\r\n")
        .ok_or_else(|| BackendError::Protocol("response without header terminator".to_string()))?;
    let header_text = std::str::from_utf8(&raw[..header_end])
        .map_err(|_| BackendError::Protocol("non-utf8 response headers".to_string()))?;
    let mut lines = header_text.split("\r\n");
    let status_line = lines
        .next()
        .ok_or_else(|| BackendError::Protocol("empty response".to_string()))?;
    let mut parts = status_line.split_whitespace();
    match parts.next() {
        Some(version) if version.starts_with("HTTP/") => {}
        _ => return Err(BackendError::Protocol(format!("bad status line {status_line:?}"))),
    }
    let status: u16 = parts
        .next()
        .and_then(|code| code.parse().ok())
        .ok_or_else(|| BackendError::Protocol(format!("bad status line {status_line:?}")))?;

    let mut content_length = None;
    for line in lines {
        if let Some((name, value)) = line.split_once(':') {
            if name.trim().eq_ignore_ascii_case("content-length") {
                content_length = Some(value.trim().parse::<usize>().map_err(|_| {
                    BackendError::Protocol(format!("bad content-length {value:?}"))
                })?);
            }
        }
    }
    let body_start = header_end + 4;
    let available = raw.len() - body_start;
    let body = match content_length {
        Some(length) if length > available => {
            return Err(BackendError::Protocol(format!(
                "truncated body: content-length {length}, got {available}"
            )))
        }
        Some(length) => raw[body_start..body_start + length].to_vec(),
        None => raw[body_start..].to_vec(),
    };
    Ok((status, body))
}

/// Validate the response envelope: matching request id and one output per
/// input.
pub fn decode_response_envelope(
    body: &[u8],
    request_id: &str,
    expected_outputs: usize,
) -> Result<Vec<serde_json::Value>, BackendError> {
    let envelope: ResponseEnvelope = serde_json::from_slice(body)
        .map_err(|e| BackendError::Protocol(format!("decoding response: {e}")))?;
    if envelope.request_id != request_id {
        return Err(BackendError::Protocol(format!(
            "request id mismatch: sent {request_id:?}, got {:?}",
            envelope.request_id
        )));
    }
    if envelope.outputs.len() != expected_outputs {
        return Err(BackendError::Protocol(format!(
            "expected {expected_outputs} outputs, got {}",
            envelope.outputs.len()
        )));
    }
    Ok(envelope.outputs)
}
