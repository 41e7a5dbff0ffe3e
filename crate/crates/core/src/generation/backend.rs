// SPDX-License-Identifier: Apache-2.0

use std::time::{Duration, Instant};

use async_trait::async_trait;

use super::{GenerationError, GenerationRequest, GenerationResponse, Payload};
use crate::prompt::{extract_context, ChatRole};

/// Backend URL that selects the in-process [`EchoBackend`].
pub const ECHO_URL: &str = "echo://";

#[async_trait]
pub trait Backend: Send + Sync {
    fn name(&self) -> &str;
    async fn complete(&self, request: &GenerationRequest) -> Result<String, GenerationError>;
}

/// Answers with the serialized context found in the prompt, or the prompt
/// itself when there is none.
#[derive(Debug, Clone, Default)]
pub struct EchoBackend;

impl EchoBackend {
    pub fn respond(request: &GenerationRequest) -> String {
        let text = match &request.payload {
            Payload::Prompt(p) => p.as_str(),
            Payload::Messages(ms) => {
                ms.iter().rev().find(|m| m.role == ChatRole::User).map(|m| m.content.as_str()).unwrap_or_default()
            }
        };
        extract_context(text).unwrap_or(text).to_owned()
    }
}

#[async_trait]
impl Backend for EchoBackend {
    fn name(&self) -> &str {
        ECHO_URL
    }

    async fn complete(&self, request: &GenerationRequest) -> Result<String, GenerationError> {
        Ok(Self::respond(request))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_retries: 3, initial_backoff: Duration::from_secs(1) }
    }
}

impl RetryPolicy {
    /// Waits before each retry: initial, 2×initial, 4×initial, ...
    pub fn delays(&self) -> Vec<Duration> {
        (0..self.max_retries).map(|i| self.initial_backoff * 2u32.pow(i)).collect()
    }
}

pub struct HttpBackend {
    url: String,
    token: Option<String>,
    client: reqwest::Client,
    retry: RetryPolicy,
    timeout: Duration,
}

impl HttpBackend {
    pub fn new(url: impl Into<String>, token: Option<String>, retry: RetryPolicy, timeout: Duration) -> Self {
        let client =
            reqwest::Client::builder().timeout(timeout).build().expect("http client without TLS always builds");
        Self { url: url.into(), token, client, retry, timeout }
    }

    async fn attempt(&self, request: &GenerationRequest) -> Result<String, GenerationError> {
        let mut call = self.client.post(&self.url).json(request);
        if let Some(t) = &self.token {
            call = call.bearer_auth(t);
        }
        let resp = call.send().await.map_err(|e| self.transport(e))?;
        let status = resp.status();
        let body = resp.text().await.map_err(|e| self.transport(e))?;
        if status.is_server_error() {
            return Err(GenerationError::BackendUnavailable { attempts: 1, reason: format!("status {status}") });
        }
        if !status.is_success() {
            return Err(GenerationError::BackendRejected { status: status.as_u16(), body });
        }
        serde_json::from_str::<GenerationResponse>(&body)
            .map(|r| r.text)
            .map_err(|e| GenerationError::MalformedResponse(e.to_string()))
    }

    fn transport(&self, e: reqwest::Error) -> GenerationError {
        if e.is_timeout() {
            GenerationError::Timeout(self.timeout)
        } else {
            GenerationError::BackendUnavailable { attempts: 1, reason: e.to_string() }
        }
    }
}

#[async_trait]
impl Backend for HttpBackend {
    fn name(&self) -> &str {
        &self.url
    }

    async fn complete(&self, request: &GenerationRequest) -> Result<String, GenerationError> {
        let delays = self.retry.delays();
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(request).await {
                Err(GenerationError::BackendUnavailable { reason, .. }) => match delays.get(attempts as usize - 1) {
                    Some(d) => tokio::time::sleep(*d).await,
                    None => return Err(GenerationError::BackendUnavailable { attempts, reason }),
                },
                other => return other,
            }
        }
    }
}

/// Request timeout of backends built by [`backend_for_url`].
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(300);

/// [`EchoBackend`] for [`ECHO_URL`], an [`HttpBackend`] otherwise.
pub fn backend_for_url(url: &str, token: Option<String>) -> Result<Box<dyn Backend>, GenerationError> {
    if url == ECHO_URL {
        return Ok(Box::new(EchoBackend));
    }
    // Built without TLS: backends sit behind a local gateway.
    if !url.starts_with("http://") {
        return Err(GenerationError::InvalidConfig(format!("backend url `{url}` must be http:// or {ECHO_URL}")));
    }
    Ok(Box::new(HttpBackend::new(url, token, RetryPolicy::default(), DEFAULT_TIMEOUT)))
}

/// Measures how long `f` takes.
pub(crate) async fn timed<F, T>(f: F) -> (T, Duration)
where
    F: std::future::Future<Output = T>,
{
    let start = Instant::now();
    let out = f.await;
    (out, start.elapsed())
}
