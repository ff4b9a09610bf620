use std::sync::Arc;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use rand::Rng;
use reqwest::StatusCode;
use serde_json::{json, Value};
use tracing::{debug, warn};

use super::{
    validate_messages, Agent, AgentRole, AgentSpec, CallContext, CallStats, CallStatsSnapshot,
    ChatMessage, ChatReply, RequestGate, Usage, ITEM_ID_HEADER,
};
use crate::error::{Error, Result};

/// Builds [`HttpAgent`]s that share one connection pool and one request gate.
#[derive(Clone)]
pub struct Gateway {
    client: reqwest::Client,
    gate: Arc<RequestGate>,
}

impl Gateway {
    pub fn new(gate: RequestGate) -> Self {
        Self { client: reqwest::Client::new(), gate: Arc::new(gate) }
    }

    pub fn agent(&self, spec: AgentSpec) -> Result<Arc<HttpAgent>> {
        spec.validate()?;
        Ok(Arc::new(HttpAgent {
            spec,
            client: self.client.clone(),
            gate: self.gate.clone(),
            stats: CallStats::default(),
        }))
    }

    pub fn gate(&self) -> &RequestGate {
        &self.gate
    }
}

impl Default for Gateway {
    fn default() -> Self {
        Self::new(RequestGate::default())
    }
}

pub struct HttpAgent {
    spec: AgentSpec,
    client: reqwest::Client,
    gate: Arc<RequestGate>,
    stats: CallStats,
}

enum Attempt {
    Done(ChatReply),
    Retry(String),
    Fatal(Error),
}

impl HttpAgent {
    pub fn spec(&self) -> &AgentSpec {
        &self.spec
    }

    pub fn stats(&self) -> CallStatsSnapshot {
        self.stats.snapshot()
    }

    fn request_body(&self, messages: &[ChatMessage]) -> Value {
        json!({
            "model": self.spec.model,
            "messages": messages.iter().map(ChatMessage::to_wire).collect::<Vec<_>>(),
            "temperature": self.spec.temperature,
            "max_tokens": self.spec.max_tokens,
        })
    }

    fn backoff(&self, retry: u32) -> Duration {
        let factor = 2u32.saturating_pow(retry.min(16));
        let jitter = rand::rng().random_range(0.5..=1.0);
        self.spec.backoff_base.saturating_mul(factor).mul_f64(jitter)
    }

    async fn attempt(&self, ctx: &CallContext, body: &Value, budget: Duration) -> Attempt {
        let mut req = self
            .client
            .post(self.spec.endpoint())
            .timeout(budget)
            .json(body);
        if let Some(key) = &self.spec.api_key {
            req = req.bearer_auth(key.expose());
        }
        if let Some(item) = &ctx.item_id {
            req = req.header(ITEM_ID_HEADER, item);
        }
        self.stats.record_request();
        let resp = match req.send().await {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(format!("transport error: {e}")),
        };
        let status = resp.status();
        if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
            return Attempt::Retry(format!("HTTP {status}"));
        }
        let text = match resp.text().await {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(format!("transport error reading body: {e}")),
        };
        if !status.is_success() {
            return Attempt::Fatal(self.protocol(format!("HTTP {status}: {}", truncate(&text, 200))));
        }
        match parse_completion(&text) {
            Ok((text, usage)) => Attempt::Done(ChatReply { text, usage, attempts: 0 }),
            Err(reason) => Attempt::Fatal(self.protocol(reason)),
        }
    }

    fn protocol(&self, reason: String) -> Error {
        Error::Protocol { agent_id: self.spec.agent_id.clone(), reason }
    }
}

#[async_trait]
impl Agent for HttpAgent {
    fn id(&self) -> &str {
        &self.spec.agent_id
    }

    fn role(&self) -> AgentRole {
        self.spec.role
    }

    async fn chat(&self, ctx: &CallContext, messages: &[ChatMessage]) -> Result<ChatReply> {
        validate_messages(&self.spec.agent_id, self.spec.role, messages)?;
        let body = self.request_body(messages);
        let mut spent = Duration::ZERO;
        let mut attempts = 0u32;
        loop {
            let budget = self.spec.timeout.saturating_sub(spent);
            if budget.is_zero() {
                self.stats.record_failure();
                return Err(Error::AgentUnavailable {
                    agent_id: self.spec.agent_id.clone(),
                    attempts,
                    reason: "timeout budget exhausted".into(),
                });
            }
            attempts += 1;
            let permit = self.gate.acquire(&self.spec.base_url).await;
            let started = Instant::now();
            let outcome = self.attempt(ctx, &body, budget).await;
            spent += started.elapsed();
            drop(permit);
            match outcome {
                Attempt::Done(mut reply) => {
                    reply.attempts = attempts;
                    self.stats.record_success();
                    return Ok(reply);
                }
                Attempt::Fatal(err) => {
                    self.stats.record_failure();
                    return Err(err);
                }
                Attempt::Retry(reason) => {
                    if attempts > self.spec.max_retries {
                        warn!(agent = %self.spec.agent_id, %reason, attempts, "giving up");
                        self.stats.record_failure();
                        return Err(Error::AgentUnavailable {
                            agent_id: self.spec.agent_id.clone(),
                            attempts,
                            reason,
                        });
                    }
                    let delay = self.backoff(attempts - 1);
                    debug!(agent = %self.spec.agent_id, %reason, ?delay, "retrying");
                    self.stats.record_retry();
                    tokio::time::sleep(delay).await;
                }
            }
        }
    }
}

/// Pulls the assistant text (and usage, if any) out of a chat-completions reply body.
pub(crate) fn parse_completion(body: &str) -> std::result::Result<(String, Option<Usage>), String> {
    let value: Value = serde_json::from_str(body).map_err(|e| format!("malformed JSON reply: {e}"))?;
    let content = value
        .get("choices")
        .and_then(|c| c.get(0))
        .and_then(|c| c.get("message"))
        .and_then(|m| m.get("content"))
        .ok_or_else(|| "reply has no choices[0].message.content".to_string())?;
    let text = match content {
        Value::String(s) => s.clone(),
        Value::Array(parts) => parts
            .iter()
            .filter_map(|p| p.get("text").and_then(Value::as_str))
            .collect::<Vec<_>>()
            .join(""),
        other => return Err(format!("unexpected content type: {other}")),
    };
    if text.trim().is_empty() {
        return Err("empty completion".into());
    }
    let usage = value
        .get("usage")
        .and_then(|u| serde_json::from_value::<Usage>(u.clone()).ok());
    Ok((text, usage))
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}
