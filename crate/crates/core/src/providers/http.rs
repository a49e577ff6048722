//! Live-mode adapters speaking JSON over HTTP.
//!
//! Chat requests use the common chat-completion shape:
//!
//! ```json
//! {"model": "...", "messages": [{"role": "user", "content": "<prompt>"}], "max_tokens": 512}
//! ```
//!
//! and read `choices[0].message.content` from the response. Embedding
//! requests send `{"model": "...", "input": "<text>"}` and read
//! `data[0].embedding`.

use std::sync::Arc;
use std::time::{Duration, Instant};

use serde_json::{json, Value as Json};
use tracing::{debug, warn};

use crate::embedding::EmbeddingVector;

use super::{CompletionProvider, EmbeddingProvider, ProviderError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HttpMethod {
    Get,
    Post,
}

#[derive(Debug, Clone)]
pub struct HttpRequest {
    pub method: HttpMethod,
    pub url: String,
    pub bearer: Option<String>,
    pub body: Option<Json>,
    pub timeout: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TransportError {
    Timeout,
    Connect(String),
}

/// Sends one request. Implemented over reqwest in production and by
/// scripted fakes in tests.
pub trait HttpTransport: Send + Sync {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError>;
}

pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new() -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| ProviderError::Config(e.to_string()))?;
        Ok(Self { client })
    }
}

impl HttpTransport for ReqwestTransport {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        let mut builder = match request.method {
            HttpMethod::Get => self.client.get(&request.url),
            HttpMethod::Post => self.client.post(&request.url),
        }
        .timeout(request.timeout);
        if let Some(token) = &request.bearer {
            builder = builder.bearer_auth(token);
        }
        if let Some(body) = &request.body {
            builder = builder.json(body);
        }
        let resp = builder.send().map_err(|e| {
            if e.is_timeout() {
                TransportError::Timeout
            } else {
                TransportError::Connect(e.to_string())
            }
        })?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(|e| TransportError::Connect(e.to_string()))?;
        Ok(HttpResponse { status, body })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    /// Delay before the second attempt; doubles after each failure.
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay: Duration::from_millis(250),
        }
    }
}

/// Sends with retries on timeouts, connection failures and 5xx. A 4xx is
/// returned immediately as a permanent error.
pub(crate) fn send_with_retry(
    transport: &dyn HttpTransport,
    request: &HttpRequest,
    policy: RetryPolicy,
) -> Result<HttpResponse, ProviderError> {
    send_with_retry_accepting(transport, request, policy, &[])
}

/// As [`send_with_retry`], but statuses in `accepted` are returned as
/// responses instead of errors.
pub(crate) fn send_with_retry_accepting(
    transport: &dyn HttpTransport,
    request: &HttpRequest,
    policy: RetryPolicy,
    accepted: &[u16],
) -> Result<HttpResponse, ProviderError> {
    let mut delay = policy.base_delay;
    let mut last = String::new();
    for attempt in 1..=policy.max_attempts {
        let started = Instant::now();
        let outcome = transport.send(request);
        let elapsed = started.elapsed();
        match outcome {
            Ok(resp) if (200..300).contains(&resp.status) || accepted.contains(&resp.status) => {
                debug!(url = %request.url, attempt, status = resp.status, ?elapsed, "provider request ok");
                return Ok(resp);
            }
            // rate limits and request timeouts are worth another try
            Ok(resp) if (400..500).contains(&resp.status) && !matches!(resp.status, 408 | 429) => {
                warn!(url = %request.url, status = resp.status, ?elapsed, "provider request rejected");
                return Err(ProviderError::Permanent(format!(
                    "HTTP {}: {}",
                    resp.status,
                    snippet(&resp.body)
                )));
            }
            Ok(resp) => last = format!("HTTP {}: {}", resp.status, snippet(&resp.body)),
            Err(TransportError::Timeout) => last = "request timed out".into(),
            Err(TransportError::Connect(e)) => last = e,
        }
        warn!(url = %request.url, attempt, ?elapsed, error = %last, "provider request failed");
        if attempt < policy.max_attempts {
            std::thread::sleep(delay);
            delay *= 2;
        }
    }
    Err(ProviderError::Retryable(format!(
        "{} attempts failed, last: {last}",
        policy.max_attempts
    )))
}

fn snippet(body: &str) -> &str {
    let end = body
        .char_indices()
        .nth(200)
        .map_or(body.len(), |(i, _)| i);
    &body[..end]
}

pub struct HttpCompletion {
    transport: Arc<dyn HttpTransport>,
    endpoint: String,
    api_key: Option<String>,
    model: String,
    timeout: Duration,
    retry: RetryPolicy,
}

impl HttpCompletion {
    pub fn new(
        transport: Arc<dyn HttpTransport>,
        endpoint: String,
        api_key: Option<String>,
        model: String,
        timeout: Duration,
        retry: RetryPolicy,
    ) -> Self {
        Self {
            transport,
            endpoint,
            api_key,
            model,
            timeout,
            retry,
        }
    }
}

impl CompletionProvider for HttpCompletion {
    fn name(&self) -> &str {
        &self.model
    }

    fn complete(&self, prompt: &str, max_tokens: usize) -> Result<String, ProviderError> {
        let request = HttpRequest {
            method: HttpMethod::Post,
            url: self.endpoint.clone(),
            bearer: self.api_key.clone(),
            body: Some(json!({
                "model": self.model,
                "messages": [{"role": "user", "content": prompt}],
                "max_tokens": max_tokens,
            })),
            timeout: self.timeout,
        };
        let resp = send_with_retry(self.transport.as_ref(), &request, self.retry)?;
        let body: Json = serde_json::from_str(&resp.body)
            .map_err(|e| ProviderError::Permanent(format!("response is not JSON: {e}")))?;
        body.pointer("/choices/0/message/content")
            .and_then(Json::as_str)
            .map(str::to_string)
            .ok_or_else(|| {
                ProviderError::Permanent("response lacks choices[0].message.content".into())
            })
    }
}

pub struct HttpEmbedder {
    transport: Arc<dyn HttpTransport>,
    endpoint: String,
    api_key: Option<String>,
    model: String,
    dim: usize,
    timeout: Duration,
    retry: RetryPolicy,
}

impl HttpEmbedder {
    pub fn new(
        transport: Arc<dyn HttpTransport>,
        endpoint: String,
        api_key: Option<String>,
        model: String,
        dim: usize,
        timeout: Duration,
        retry: RetryPolicy,
    ) -> Self {
        Self {
            transport,
            endpoint,
            api_key,
            model,
            dim,
            timeout,
            retry,
        }
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, ProviderError> {
        if text.trim().is_empty() {
            return Err(ProviderError::InvalidInput("cannot embed empty text".into()));
        }
        let request = HttpRequest {
            method: HttpMethod::Post,
            url: self.endpoint.clone(),
            bearer: self.api_key.clone(),
            body: Some(json!({"model": self.model, "input": text})),
            timeout: self.timeout,
        };
        let resp = send_with_retry(self.transport.as_ref(), &request, self.retry)?;
        let body: Json = serde_json::from_str(&resp.body)
            .map_err(|e| ProviderError::Permanent(format!("response is not JSON: {e}")))?;
        let values: Vec<f32> = body
            .pointer("/data/0/embedding")
            .and_then(Json::as_array)
            .ok_or_else(|| ProviderError::Permanent("response lacks data[0].embedding".into()))?
            .iter()
            .map(|v| v.as_f64().map(|f| f as f32))
            .collect::<Option<_>>()
            .ok_or_else(|| ProviderError::Permanent("non-numeric embedding component".into()))?;
        if values.len() != self.dim {
            return Err(ProviderError::Permanent(format!(
                "embedding has dimension {}, expected {}",
                values.len(),
                self.dim
            )));
        }
        EmbeddingVector::new(values).map_err(|e| ProviderError::Permanent(e.to_string()))
    }
}

/// Fetches source documents given by URL for ingestion.
pub struct DocumentFetcher {
    transport: Arc<dyn HttpTransport>,
    timeout: Duration,
    retry: RetryPolicy,
}

impl DocumentFetcher {
    pub fn new(transport: Arc<dyn HttpTransport>, timeout: Duration, retry: RetryPolicy) -> Self {
        Self {
            transport,
            timeout,
            retry,
        }
    }

    pub fn live(timeout: Duration, retry: RetryPolicy) -> Result<Self, ProviderError> {
        Ok(Self::new(Arc::new(ReqwestTransport::new()?), timeout, retry))
    }

    pub fn fetch(&self, url: &str) -> Result<String, ProviderError> {
        let request = HttpRequest {
            method: HttpMethod::Get,
            url: url.to_string(),
            bearer: None,
            body: None,
            timeout: self.timeout,
        };
        send_with_retry(self.transport.as_ref(), &request, self.retry).map(|r| r.body)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use parking_lot::Mutex;

    /// Replays a fixed script of outcomes and records requests.
    pub(crate) struct ScriptedTransport {
        script: Mutex<Vec<Result<HttpResponse, TransportError>>>,
        pub(crate) calls: Mutex<Vec<HttpRequest>>,
    }

    impl ScriptedTransport {
        pub(crate) fn new(mut script: Vec<Result<HttpResponse, TransportError>>) -> Self {
            script.reverse();
            Self {
                script: Mutex::new(script),
                calls: Mutex::new(Vec::new()),
            }
        }
    }

    impl HttpTransport for ScriptedTransport {
        fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
            self.calls.lock().push(request.clone());
            self.script
                .lock()
                .pop()
                .unwrap_or(Err(TransportError::Connect("script exhausted".into())))
        }
    }

    fn ok(body: &str) -> Result<HttpResponse, TransportError> {
        Ok(HttpResponse {
            status: 200,
            body: body.into(),
        })
    }

    fn status(code: u16) -> Result<HttpResponse, TransportError> {
        Ok(HttpResponse {
            status: code,
            body: "err".into(),
        })
    }

    fn completion(t: Arc<ScriptedTransport>) -> HttpCompletion {
        HttpCompletion::new(
            t,
            "http://llm.invalid/v1/chat/completions".into(),
            Some("secret".into()),
            "test-model".into(),
            Duration::from_secs(1),
            RetryPolicy {
                max_attempts: 3,
                base_delay: Duration::ZERO,
            },
        )
    }

    const BODY: &str = r#"{"choices":[{"message":{"role":"assistant","content":"fixed body"}}]}"#;

    #[test]
    fn passes_body_through_and_sends_chat_shape() {
        let t = Arc::new(ScriptedTransport::new(vec![ok(BODY)]));
        let out = completion(t.clone()).complete("hello", 64).unwrap();
        assert_eq!(out, "fixed body");
        let calls = t.calls.lock();
        let body = calls[0].body.as_ref().unwrap();
        assert_eq!(body["model"], "test-model");
        assert_eq!(body["messages"][0]["content"], "hello");
        assert_eq!(body["max_tokens"], 64);
        assert_eq!(calls[0].bearer.as_deref(), Some("secret"));
    }

    #[test]
    fn retries_twice_then_succeeds() {
        let t = Arc::new(ScriptedTransport::new(vec![
            Err(TransportError::Timeout),
            status(503),
            ok(BODY),
        ]));
        assert_eq!(completion(t.clone()).complete("p", 8).unwrap(), "fixed body");
        assert_eq!(t.calls.lock().len(), 3);
    }

    #[test]
    fn gives_up_after_three_attempts() {
        let t = Arc::new(ScriptedTransport::new(vec![status(500), status(502), status(503), ok(BODY)]));
        let err = completion(t.clone()).complete("p", 8).unwrap_err();
        assert!(err.is_retryable());
        assert_eq!(t.calls.lock().len(), 3);
    }

    #[test]
    fn rate_limit_is_retried() {
        let t = Arc::new(ScriptedTransport::new(vec![status(429), ok(BODY)]));
        assert_eq!(completion(t.clone()).complete("p", 8).unwrap(), "fixed body");
        assert_eq!(t.calls.lock().len(), 2);
    }

    #[test]
    fn unauthorized_is_permanent_without_retry() {
        let t = Arc::new(ScriptedTransport::new(vec![status(401), ok(BODY)]));
        let err = completion(t.clone()).complete("p", 8).unwrap_err();
        assert!(matches!(err, ProviderError::Permanent(_)));
        assert_eq!(t.calls.lock().len(), 1);
    }

    #[test]
    fn embedder_normalizes_and_checks_dimension() {
        let t = Arc::new(ScriptedTransport::new(vec![
            ok(r#"{"data":[{"embedding":[3.0,4.0]}]}"#),
            ok(r#"{"data":[{"embedding":[1.0,2.0,3.0]}]}"#),
        ]));
        let e = HttpEmbedder::new(
            t,
            "http://emb.invalid".into(),
            None,
            "m".into(),
            2,
            Duration::from_secs(1),
            RetryPolicy::default(),
        );
        let v = e.embed("x").unwrap();
        assert!((v.values()[0] - 0.6).abs() < 1e-6);
        assert!(matches!(e.embed("y"), Err(ProviderError::Permanent(_))));
    }
}
