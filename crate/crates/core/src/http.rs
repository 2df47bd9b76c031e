//! Blocking JSON-over-HTTP plumbing shared by the embedding, scoring and
//! generation clients: request ids, bounded in-flight requests, retries.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

pub const REQUEST_ID_HEADER: &str = "x-request-id";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HttpError {
    #[error("request {request_id} timed out")]
    Timeout { request_id: String },
    #[error("request {request_id} failed with HTTP {status}: {body}")]
    BadStatus {
        request_id: String,
        status: u16,
        body: String,
    },
    #[error("request {request_id} returned a malformed response: {message}")]
    MalformedResponse { request_id: String, message: String },
    #[error("request {request_id} could not be sent: {message}")]
    Transport { request_id: String, message: String },
}

impl HttpError {
    pub fn request_id(&self) -> &str {
        match self {
            HttpError::Timeout { request_id }
            | HttpError::BadStatus { request_id, .. }
            | HttpError::MalformedResponse { request_id, .. }
            | HttpError::Transport { request_id, .. } => request_id,
        }
    }

    fn retryable(&self) -> bool {
        match self {
            HttpError::Timeout { .. } | HttpError::Transport { .. } => true,
            HttpError::BadStatus { status, .. } => *status >= 500,
            HttpError::MalformedResponse { .. } => false,
        }
    }

    pub(crate) fn malformed(request_id: &str, message: impl Into<String>) -> Self {
        HttpError::MalformedResponse {
            request_id: request_id.to_string(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct HttpSettings {
    pub timeout: Duration,
    pub max_in_flight: usize,
    pub max_retries: usize,
}

/// Counting semaphore capping concurrent requests through one client handle.
struct Permits {
    available: Mutex<usize>,
    freed: Condvar,
}

impl Permits {
    fn acquire(&self) -> PermitGuard<'_> {
        let mut n = self.available.lock().unwrap();
        while *n == 0 {
            n = self.freed.wait(n).unwrap();
        }
        *n -= 1;
        PermitGuard(self)
    }
}

struct PermitGuard<'a>(&'a Permits);

impl Drop for PermitGuard<'_> {
    fn drop(&mut self) {
        *self.0.available.lock().unwrap() += 1;
        self.0.freed.notify_one();
    }
}

pub struct JsonClient {
    base: String,
    client: reqwest::blocking::Client,
    permits: Permits,
    max_retries: usize,
    max_in_flight: usize,
}

static NEXT_REQUEST: AtomicU64 = AtomicU64::new(1);

impl JsonClient {
    pub fn new(endpoint: &str, settings: &HttpSettings) -> Result<Self, HttpError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(settings.timeout)
            .build()
            .map_err(|e| HttpError::Transport {
                request_id: "-".into(),
                message: e.to_string(),
            })?;
        Ok(Self {
            base: endpoint.trim_end_matches('/').to_string(),
            client,
            permits: Permits {
                available: Mutex::new(settings.max_in_flight.max(1)),
                freed: Condvar::new(),
            },
            max_retries: settings.max_retries,
            max_in_flight: settings.max_in_flight.max(1),
        })
    }

    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight
    }

    /// POSTs `body` to `{endpoint}{path}`; retries timeouts, transport errors
    /// and 5xx responses. Every attempt reuses the same request id.
    pub fn post<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        path: &str,
        body: &Req,
    ) -> Result<(String, Resp), HttpError> {
        let request_id = format!(
            "{}-{}",
            std::process::id(),
            NEXT_REQUEST.fetch_add(1, Ordering::Relaxed)
        );
        let mut attempt = 0;
        loop {
            let result = {
                let _permit = self.permits.acquire();
                self.attempt(path, body, &request_id)
            };
            match result {
                Err(e) if e.retryable() && attempt < self.max_retries => {
                    attempt += 1;
                    std::thread::sleep(Duration::from_millis(20 << attempt));
                }
                other => return other.map(|resp| (request_id, resp)),
            }
        }
    }

    fn attempt<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        path: &str,
        body: &Req,
        request_id: &str,
    ) -> Result<Resp, HttpError> {
        let url = format!("{}{}", self.base, path);
        let response = self
            .client
            .post(&url)
            .header(REQUEST_ID_HEADER, request_id)
            .json(body)
            .send()
            .map_err(|e| classify(e, request_id))?;
        let status = response.status();
        let text = response.text().map_err(|e| classify(e, request_id))?;
        if !status.is_success() {
            return Err(HttpError::BadStatus {
                request_id: request_id.to_string(),
                status: status.as_u16(),
                body: text,
            });
        }
        serde_json::from_str(&text).map_err(|e| HttpError::malformed(request_id, e.to_string()))
    }
}

fn classify(e: reqwest::Error, request_id: &str) -> HttpError {
    if e.is_timeout() {
        HttpError::Timeout {
            request_id: request_id.to_string(),
        }
    } else {
        HttpError::Transport {
            request_id: request_id.to_string(),
            message: e.to_string(),
        }
    }
}
