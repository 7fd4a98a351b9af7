//! Deterministic stand-in for a chat-completion and embeddings endpoint.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use musiq_core::instruct::{ChatRequest, ChatResponse};
use musiq_core::metrics::{Embedder, HashingEmbedder};
use musiq_core::rng::sha256_hex;
use serde::{Deserialize, Serialize};
use serde_json::json;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StubRule {
    /// Substring of the last message that selects this rule.
    pub contains: String,
    pub reply: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StubConfig {
    /// Checked in order before the generated default reply.
    pub rules: Vec<StubRule>,
    pub pairs_per_reply: usize,
    /// Embedded in the final answer of every generated reply.
    pub filter_phrase: Option<String>,
    /// Answer this many initial chat requests with 503.
    pub fail_first: usize,
}

impl Default for StubConfig {
    fn default() -> Self {
        Self {
            rules: Vec::new(),
            pairs_per_reply: 3,
            filter_phrase: None,
            fail_first: 0,
        }
    }
}

#[derive(Debug, Default)]
pub struct StubState {
    pub config: StubConfig,
    served: AtomicUsize,
    requests: Mutex<Vec<ChatRequest>>,
}

impl StubState {
    pub fn new(config: StubConfig) -> Arc<Self> {
        Arc::new(Self {
            config,
            ..Default::default()
        })
    }

    /// Every chat request received, including rejected ones.
    pub fn requests(&self) -> Vec<ChatRequest> {
        self.requests.lock().unwrap_or_else(|p| p.into_inner()).clone()
    }

    /// The reply for `request`, a pure function of its last message.
    pub fn reply(&self, request: &ChatRequest) -> String {
        let last = request.messages.last().map(|m| m.content.as_str()).unwrap_or("");
        if let Some(rule) = self.config.rules.iter().find(|r| last.contains(&r.contains)) {
            return rule.reply.clone();
        }
        let digest = sha256_hex(last.as_bytes());
        if last.contains("Response 1:") && last.contains("Response 2:") {
            let pick = u8::from_str_radix(&digest[..2], 16).unwrap_or(0) % 2 + 1;
            return format!("Response {pick}");
        }
        let tag = &digest[..8];
        let n = self.config.pairs_per_reply;
        (1..=n)
            .map(|k| {
                let mut answer = format!("Answer {k} for clip {tag}.");
                if k == n {
                    if let Some(phrase) = &self.config.filter_phrase {
                        answer = format!("{answer} {phrase}");
                    }
                }
                format!("Q: Question {k} about clip {tag}?\nA: {answer}")
            })
            .collect::<Vec<_>>()
            .join("\n\n")
    }
}

async fn chat(State(state): State<Arc<StubState>>, Json(request): Json<ChatRequest>) -> Response {
    state
        .requests
        .lock()
        .unwrap_or_else(|p| p.into_inner())
        .push(request.clone());
    let n = state.served.fetch_add(1, Ordering::SeqCst);
    if n < state.config.fail_first {
        return (StatusCode::SERVICE_UNAVAILABLE, "stub: scripted failure").into_response();
    }
    Json(ChatResponse::text(state.reply(&request))).into_response()
}

#[derive(Debug, Deserialize)]
struct EmbeddingRequest {
    input: Vec<String>,
}

async fn embeddings(Json(req): Json<EmbeddingRequest>) -> Response {
    let texts: Vec<&str> = req.input.iter().map(String::as_str).collect();
    match HashingEmbedder::default().embed(&texts) {
        Ok(vectors) => {
            let data: Vec<_> = vectors
                .into_iter()
                .enumerate()
                .map(|(index, embedding)| json!({ "index": index, "embedding": embedding }))
                .collect();
            Json(json!({ "data": data })).into_response()
        }
        Err(e) => (StatusCode::BAD_REQUEST, e.to_string()).into_response(),
    }
}

async fn recorded(State(state): State<Arc<StubState>>) -> Json<Vec<ChatRequest>> {
    Json(state.requests())
}

/// Routes: `/v1/chat/completions`, `/v1/embeddings`, and `/requests` for
/// inspecting what was received.
pub fn router(state: Arc<StubState>) -> Router {
    Router::new()
        .route("/v1/chat/completions", post(chat))
        .route("/v1/embeddings", post(embeddings))
        .route("/requests", get(recorded))
        .with_state(state)
}
