use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub choices: Vec<ChatChoice>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatChoice {
    pub message: ChatMessage,
}

impl ChatResponse {
    pub fn text(content: impl Into<String>) -> Self {
        Self {
            choices: vec![ChatChoice {
                message: ChatMessage {
                    role: "assistant".into(),
                    content: content.into(),
                },
            }],
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EndpointError {
    #[error("endpoint unreachable after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: String },
    #[error("endpoint returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed endpoint reply: {0}")]
    BadReply(String),
}

/// Exponential backoff: `base * 2^attempt`, capped at `max_delay`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 5,
            base_delay_ms: 500,
            max_delay_ms: 30_000,
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, attempt: u32) -> Duration {
        let ms = self.base_delay_ms.saturating_mul(1u64 << attempt.min(30));
        Duration::from_millis(ms.min(self.max_delay_ms))
    }
}

pub trait ChatClient: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, EndpointError>;
}

/// Chat-completion client over HTTP.
#[derive(Debug, Clone)]
pub struct HttpChatClient {
    url: String,
    api_key: Option<String>,
    retry: RetryPolicy,
    http: reqwest::blocking::Client,
}

enum Attempt {
    Done(String),
    Retry(String),
    Fatal(EndpointError),
}

impl HttpChatClient {
    pub fn new(url: impl Into<String>, timeout: Duration, retry: RetryPolicy) -> Result<Self, EndpointError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| EndpointError::BadReply(e.to_string()))?;
        Ok(Self {
            url: url.into(),
            api_key: None,
            retry,
            http,
        })
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key.filter(|k| !k.is_empty());
        self
    }

    fn attempt(&self, request: &ChatRequest) -> Attempt {
        let mut builder = self.http.post(&self.url).json(request);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = match builder.send() {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let status = response.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Attempt::Retry(format!("status {status}"));
        }
        let body = match response.text() {
            Ok(b) => b,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        if !status.is_success() {
            return Attempt::Fatal(EndpointError::Status {
                status: status.as_u16(),
                body,
            });
        }
        match serde_json::from_str::<ChatResponse>(&body) {
            Ok(r) => match r.choices.into_iter().next() {
                Some(c) => Attempt::Done(c.message.content),
                None => Attempt::Fatal(EndpointError::BadReply("no choices".into())),
            },
            Err(e) => Attempt::Fatal(EndpointError::BadReply(e.to_string())),
        }
    }
}

impl ChatClient for HttpChatClient {
    fn complete(&self, request: &ChatRequest) -> Result<String, EndpointError> {
        let mut attempt = 0;
        loop {
            match self.attempt(request) {
                Attempt::Done(text) => return Ok(text),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(last) => {
                    if attempt >= self.retry.max_retries {
                        return Err(EndpointError::Exhausted {
                            attempts: attempt + 1,
                            last,
                        });
                    }
                    let delay = self.retry.delay(attempt);
                    tracing::debug!(attempt, ?delay, %last, "retrying chat request");
                    std::thread::sleep(delay);
                    attempt += 1;
                }
            }
        }
    }
}
