use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use super::script::{Script, ScriptPlayer, ScriptStage, StepOutcome};
use crate::error::{Error, Result};
use crate::gateway::ITEM_ID_HEADER;
use crate::parsing::normalize;
use crate::prompts::FEEDBACK_MARKER;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedRequest {
    pub seq: u64,
    pub at: DateTime<Utc>,
    pub agent_id: String,
    pub item_id: Option<String>,
    pub stage: ScriptStage,
    pub status: u16,
    pub body: Value,
}

/// Append-only log of every request a fixture received.
#[derive(Debug, Default)]
pub struct RequestLog {
    entries: Mutex<Vec<LoggedRequest>>,
}

impl RequestLog {
    pub fn append(&self, agent_id: &str, item_id: Option<String>, stage: ScriptStage, body: Value, status: u16) {
        let mut entries = self.entries.lock().expect("request log poisoned");
        let seq = entries.len() as u64;
        entries.push(LoggedRequest { seq, at: Utc::now(), agent_id: agent_id.to_string(), item_id, stage, status, body });
    }

    pub fn entries(&self) -> Vec<LoggedRequest> {
        self.entries.lock().expect("request log poisoned").clone()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("request log poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn count_for(&self, agent_id: &str) -> usize {
        self.entries.lock().expect("request log poisoned").iter().filter(|e| e.agent_id == agent_id).count()
    }

    pub fn count_for_item(&self, agent_id: &str, item_id: &str) -> usize {
        self.entries
            .lock()
            .expect("request log poisoned")
            .iter()
            .filter(|e| e.agent_id == agent_id && e.item_id.as_deref() == Some(item_id))
            .count()
    }

    pub fn to_jsonl(&self) -> String {
        self.entries()
            .iter()
            .map(|e| serde_json::to_string(e).expect("log entry serializes") + "\n")
            .collect()
    }
}

struct ServerState {
    players: HashMap<String, ScriptPlayer>,
    log: Arc<RequestLog>,
}

/// A running fixture. Agents are reachable at `base_url(agent_id)`.
pub struct MockServer {
    addr: SocketAddr,
    log: Arc<RequestLog>,
    shutdown: Option<oneshot::Sender<()>>,
    task: Option<JoinHandle<()>>,
}

impl MockServer {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self, agent_id: &str) -> String {
        format!("http://{}/agents/{agent_id}", self.addr)
    }

    /// Root URL; `POST /chat/completions` there routes by the `model` field.
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn request_log(&self) -> Arc<RequestLog> {
        self.log.clone()
    }

    pub async fn shutdown(mut self) {
        self.stop();
        if let Some(task) = self.task.take() {
            let _ = task.await;
        }
    }

    fn stop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Starts a fixture serving `scripts` on `bind` (port 0 picks a free port).
pub async fn serve(scripts: Vec<Script>, bind: &str) -> Result<MockServer> {
    let listener = tokio::net::TcpListener::bind(bind)
        .await
        .map_err(|source| Error::Bind { addr: bind.to_string(), source })?;
    let addr = listener.local_addr()?;
    let log = Arc::new(RequestLog::default());
    let state = Arc::new(ServerState {
        players: scripts.into_iter().map(|s| (s.agent_id.clone(), ScriptPlayer::new(s))).collect(),
        log: log.clone(),
    });
    let app = Router::new()
        .route("/agents/{agent_id}/chat/completions", post(agent_chat))
        .route("/chat/completions", post(model_chat))
        .route("/agents/{agent_id}/embeddings", post(embeddings))
        .route("/embeddings", post(embeddings_root))
        .with_state(state);
    let (tx, rx) = oneshot::channel::<()>();
    let task = tokio::spawn(async move {
        let _ = axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await;
    });
    Ok(MockServer { addr, log, shutdown: Some(tx), task: Some(task) })
}

async fn agent_chat(
    State(state): State<Arc<ServerState>>,
    Path(agent_id): Path<String>,
    headers: HeaderMap,
    body: String,
) -> Response {
    chat(&state, agent_id, &headers, &body).await
}

async fn model_chat(State(state): State<Arc<ServerState>>, headers: HeaderMap, body: String) -> Response {
    let agent_id = serde_json::from_str::<Value>(&body)
        .ok()
        .and_then(|v| v["model"].as_str().map(String::from))
        .unwrap_or_default();
    chat(&state, agent_id, &headers, &body).await
}

fn wire_stage(body: &Value) -> ScriptStage {
    let Some(messages) = body["messages"].as_array() else { return ScriptStage::Initial };
    let multi_turn = messages.iter().any(|m| m["role"] == "assistant");
    let last_user_text = messages
        .iter()
        .rev()
        .find(|m| m["role"] == "user")
        .map(|m| match &m["content"] {
            Value::String(s) => s.clone(),
            Value::Array(parts) => parts.iter().filter_map(|p| p["text"].as_str()).collect::<Vec<_>>().join("\n"),
            _ => String::new(),
        })
        .unwrap_or_default();
    if multi_turn || last_user_text.contains(FEEDBACK_MARKER) {
        ScriptStage::Feedback
    } else {
        ScriptStage::Initial
    }
}

fn error_reply(status: StatusCode, message: &str) -> Response {
    (status, Json(json!({"error": {"message": message, "type": "mock_error"}}))).into_response()
}

async fn chat(state: &ServerState, agent_id: String, headers: &HeaderMap, raw: &str) -> Response {
    let item_id = headers.get(ITEM_ID_HEADER).and_then(|v| v.to_str().ok()).map(String::from);
    let Ok(body) = serde_json::from_str::<Value>(raw) else {
        state.log.append(&agent_id, item_id, ScriptStage::Any, Value::String(raw.to_string()), 400);
        return error_reply(StatusCode::BAD_REQUEST, "body is not JSON");
    };
    let stage = wire_stage(&body);
    let Some(player) = state.players.get(&agent_id) else {
        state.log.append(&agent_id, item_id, stage, body, 404);
        return error_reply(StatusCode::NOT_FOUND, "unknown agent");
    };
    let step = player.next(item_id.as_deref(), stage);
    let status = match step.outcome {
        StepOutcome::Reply(_) => 200,
        StepOutcome::Fail(s) => s,
    };
    let seq = state.log.len();
    let model = body["model"].as_str().unwrap_or(&agent_id).to_string();
    state.log.append(&agent_id, item_id, stage, body, status);
    if !step.delay.is_zero() {
        tokio::time::sleep(step.delay).await;
    }
    match step.outcome {
        StepOutcome::Reply(text) => {
            let words = text.split_whitespace().count() as u64;
            Json(json!({
                "id": format!("chatcmpl-mock-{seq}"),
                "object": "chat.completion",
                "created": 0,
                "model": model,
                "choices": [{
                    "index": 0,
                    "message": {"role": "assistant", "content": text},
                    "finish_reason": "stop"
                }],
                "usage": {"prompt_tokens": 0, "completion_tokens": words, "total_tokens": words}
            }))
            .into_response()
        }
        StepOutcome::Fail(code) => error_reply(
            StatusCode::from_u16(code).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR),
            "scripted fault",
        ),
    }
}

const EMBEDDING_DIM: usize = 64;

/// Deterministic bag-of-trigrams embedding over normalized text.
fn embed(text: &str) -> Vec<f64> {
    let chars: Vec<char> = format!("  {}  ", normalize(text)).chars().collect();
    let mut v = vec![0.0; EMBEDDING_DIM];
    for w in chars.windows(3) {
        let h = w.iter().fold(2166136261u32, |h, c| (h ^ *c as u32).wrapping_mul(16777619));
        v[h as usize % EMBEDDING_DIM] += 1.0;
    }
    v
}

async fn embeddings(
    State(state): State<Arc<ServerState>>,
    Path(agent_id): Path<String>,
    body: String,
) -> Response {
    embeddings_for(&state, agent_id, &body)
}

async fn embeddings_root(State(state): State<Arc<ServerState>>, body: String) -> Response {
    embeddings_for(&state, "embeddings".into(), &body)
}

fn embeddings_for(state: &ServerState, agent_id: String, raw: &str) -> Response {
    let Ok(body) = serde_json::from_str::<Value>(raw) else {
        return error_reply(StatusCode::BAD_REQUEST, "body is not JSON");
    };
    let inputs: Vec<String> = match &body["input"] {
        Value::String(s) => vec![s.clone()],
        Value::Array(a) => a.iter().map(|v| v.as_str().unwrap_or_default().to_string()).collect(),
        _ => return error_reply(StatusCode::BAD_REQUEST, "missing input"),
    };
    state.log.append(&agent_id, None, ScriptStage::Any, body, 200);
    let data: Vec<Value> = inputs
        .iter()
        .enumerate()
        .map(|(i, t)| json!({"object": "embedding", "index": i, "embedding": embed(t)}))
        .collect();
    Json(json!({"object": "list", "data": data})).into_response()
}
