//! Chat-endpoint classifier: request/response plumbing, retries, pacing and
//! verdict parsing.

use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Classifier, ClassifyError, ConsistencyVerdict, PromptTemplate, VerdictSource};
use crate::records::MethodRecord;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    fn new(role: &str, content: String) -> Self {
        ChatMessage {
            role: role.to_string(),
            content,
        }
    }

    pub fn system(content: String) -> Self {
        Self::new("system", content)
    }

    pub fn user(content: String) -> Self {
        Self::new("user", content)
    }

    pub fn assistant(content: String) -> Self {
        Self::new("assistant", content)
    }
}

/// Body of a chat request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub top_p: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    #[error("rate limited: {0}")]
    RateLimited(String),
    /// Worth retrying: timeouts, connection failures, 5xx.
    #[error("transient failure: {0}")]
    Transient(String),
    #[error("{0}")]
    Fatal(String),
}

/// Sends one chat request and returns the reply text.
pub trait ChatClient: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointSettings {
    pub url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token. Empty
    /// means no credential is sent.
    pub api_key_env: String,
    pub temperature: f64,
    pub top_p: f64,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
    /// Upper bound on request starts per minute across all workers; 0
    /// disables pacing.
    pub requests_per_minute: u32,
    pub concurrency: usize,
}

impl Default for EndpointSettings {
    fn default() -> Self {
        EndpointSettings {
            url: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-3.5-turbo".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            temperature: 0.0,
            top_p: 1.0,
            timeout_secs: 60,
            max_retries: 5,
            initial_backoff_ms: 500,
            max_backoff_ms: 30_000,
            requests_per_minute: 0,
            concurrency: 4,
        }
    }
}

impl EndpointSettings {
    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_retries: self.max_retries,
            initial_backoff: Duration::from_millis(self.initial_backoff_ms),
            max_backoff: Duration::from_millis(self.max_backoff_ms),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
}

impl RetryPolicy {
    pub fn none() -> Self {
        RetryPolicy {
            max_retries: 0,
            initial_backoff: Duration::ZERO,
            max_backoff: Duration::ZERO,
        }
    }

    /// Delay before retry number `attempt` (0-based): doubles each time,
    /// capped at `max_backoff`.
    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt).unwrap_or(u32::MAX);
        self.initial_backoff
            .checked_mul(factor)
            .unwrap_or(self.max_backoff)
            .min(self.max_backoff)
    }
}

/// Spaces request starts at least `interval` apart across threads.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn per_minute(n: u32) -> Self {
        let interval = if n == 0 {
            Duration::ZERO
        } else {
            Duration::from_secs(60) / n
        };
        RateLimiter {
            interval,
            next: Mutex::new(None),
        }
    }

    pub fn acquire(&self) {
        if self.interval.is_zero() {
            return;
        }
        let wait = {
            let mut next = self.next.lock().unwrap_or_else(|e| e.into_inner());
            let now = Instant::now();
            let slot = next.map_or(now, |t| t.max(now));
            *next = Some(slot + self.interval);
            slot - now
        };
        if !wait.is_zero() {
            thread::sleep(wait);
        }
    }
}

/// Blocking HTTP client for OpenAI-style chat completion endpoints.
pub struct HttpChatClient {
    url: String,
    token: Option<String>,
    http: reqwest::blocking::Client,
}

impl HttpChatClient {
    /// Fails when the credential variable is named but unset.
    pub fn new(settings: &EndpointSettings) -> Result<Self, ClassifyError> {
        let token = if settings.api_key_env.is_empty() {
            None
        } else {
            Some(std::env::var(&settings.api_key_env).map_err(|_| {
                ClassifyError::EndpointUnavailable(format!(
                    "environment variable {} is not set",
                    settings.api_key_env
                ))
            })?)
        };
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(settings.timeout_secs))
            .build()
            .map_err(|e| ClassifyError::EndpointUnavailable(e.to_string()))?;
        Ok(HttpChatClient {
            url: settings.url.clone(),
            token,
            http,
        })
    }
}

impl ChatClient for HttpChatClient {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
        let mut req = self.http.post(&self.url).json(request);
        if let Some(token) = &self.token {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() || e.is_connect() || e.is_request() {
                TransportError::Transient(e.to_string())
            } else {
                TransportError::Fatal(e.to_string())
            }
        })?;
        let status = resp.status();
        let body = resp
            .text()
            .map_err(|e| TransportError::Transient(e.to_string()))?;
        if status.as_u16() == 429 {
            return Err(TransportError::RateLimited(format!("HTTP 429: {body}")));
        }
        if status.is_server_error() || status.as_u16() == 408 {
            return Err(TransportError::Transient(format!("HTTP {status}: {body}")));
        }
        if !status.is_success() {
            return Err(TransportError::Fatal(format!("HTTP {status}: {body}")));
        }
        Ok(reply_text(&body))
    }
}

/// Assistant text from a completion body; the raw body when it is not in
/// the usual `choices[0].message.content` shape.
fn reply_text(body: &str) -> String {
    let Ok(v) = serde_json::from_str::<Value>(body) else {
        return body.to_string();
    };
    v.pointer("/choices/0/message/content")
        .or_else(|| v.pointer("/message/content"))
        .or_else(|| v.get("content"))
        .and_then(Value::as_str)
        .map(str::to_string)
        .unwrap_or_else(|| body.to_string())
}

/// Top-level JSON objects embedded in free text.
fn json_objects(text: &str) -> Vec<Value> {
    let mut found = Vec::new();
    let mut i = 0;
    while let Some(off) = text[i..].find('{') {
        let start = i + off;
        let mut stream = serde_json::Deserializer::from_str(&text[start..]).into_iter::<Value>();
        match stream.next() {
            Some(Ok(v)) if v.is_object() => {
                found.push(v);
                i = start + stream.byte_offset();
            }
            _ => i = start + 1,
        }
    }
    found
}

/// Parses a reply into `(new, old, rationale)`. The text must hold exactly
/// one JSON object with both booleans and a non-empty rationale.
pub fn parse_verdict(text: &str) -> Result<(bool, bool, String), String> {
    let objects = json_objects(text);
    let [obj] = objects.as_slice() else {
        return Err(format!("expected one JSON object, found {}", objects.len()));
    };
    let flag = |k: &str| {
        obj.get(k)
            .and_then(Value::as_bool)
            .ok_or_else(|| format!("missing boolean {k}"))
    };
    let new = flag("consistent_with_new_code")?;
    let old = flag("consistent_with_old_code")?;
    let rationale = obj
        .get("rationale")
        .and_then(Value::as_str)
        .map(str::trim)
        .filter(|r| !r.is_empty())
        .ok_or("missing rationale")?;
    Ok((new, old, rationale.to_string()))
}

pub struct LlmClassifier {
    client: Box<dyn ChatClient>,
    template: PromptTemplate,
    model: String,
    temperature: f64,
    top_p: f64,
    retry: RetryPolicy,
    limiter: RateLimiter,
}

impl LlmClassifier {
    pub fn new(client: Box<dyn ChatClient>, template: PromptTemplate, settings: &EndpointSettings) -> Self {
        LlmClassifier {
            client,
            template,
            model: settings.model.clone(),
            temperature: settings.temperature,
            top_p: settings.top_p,
            retry: settings.retry_policy(),
            limiter: RateLimiter::per_minute(settings.requests_per_minute),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn send(&self, messages: &[ChatMessage]) -> Result<String, ClassifyError> {
        let request = ChatRequest {
            model: self.model.clone(),
            messages: messages.to_vec(),
            temperature: self.temperature,
            top_p: self.top_p,
        };
        let mut attempt = 0;
        loop {
            self.limiter.acquire();
            let err = match self.client.complete(&request) {
                Ok(text) => return Ok(text),
                Err(TransportError::Fatal(m)) => return Err(ClassifyError::EndpointUnavailable(m)),
                Err(e) => e,
            };
            if attempt >= self.retry.max_retries {
                return Err(match err {
                    TransportError::RateLimited(m) => ClassifyError::RateLimited(m),
                    other => ClassifyError::EndpointUnavailable(other.to_string()),
                });
            }
            log::debug!("retrying chat request after: {err}");
            thread::sleep(self.retry.delay(attempt));
            attempt += 1;
        }
    }

    /// Renders, sends and parses; re-prompts once when the reply is not a
    /// valid verdict object.
    pub fn classify_parts(
        &self,
        old_code: &str,
        new_code: &str,
        new_comment: &str,
        old_comment: &str,
    ) -> Result<ConsistencyVerdict, ClassifyError> {
        let mut messages = self.template.render(old_code, new_code, new_comment, old_comment);
        let first = self.send(&messages)?;
        let parsed = match parse_verdict(&first) {
            Ok(p) => p,
            Err(_) => {
                messages.push(ChatMessage::assistant(first));
                messages.push(PromptTemplate::retry_message());
                let second = self.send(&messages)?;
                parse_verdict(&second).map_err(ClassifyError::MalformedResponse)?
            }
        };
        let (new, old, rationale) = parsed;
        Ok(ConsistencyVerdict {
            consistent_with_new_code: new,
            consistent_with_old_code: old,
            rationale,
            source: VerdictSource::Llm,
        })
    }
}

impl Classifier for LlmClassifier {
    fn classify(&self, r: &MethodRecord) -> Result<ConsistencyVerdict, ClassifyError> {
        self.classify_parts(&r.old_code, &r.new_code, &r.new_comment, &r.old_comment)
    }
}
