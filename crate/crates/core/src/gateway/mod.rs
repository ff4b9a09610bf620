//! Uniform client surface over OpenAI-compatible chat-completions endpoints.
//!
//! Every agent (HTTP-backed or scripted) implements [`Agent`]. The pipeline
//! only ever talks to `Arc<dyn Agent>` handles.

mod gate;
mod http;
mod message;

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use gate::RequestGate;
pub use http::{Gateway, HttpAgent};
pub use message::{ChatMessage, ContentPart, Sender};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentRole {
    Expert,
    Mediator,
    Judge,
    Parser,
}

impl AgentRole {
    pub fn accepts_images(self) -> bool {
        matches!(self, AgentRole::Expert)
    }
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AgentRole::Expert => "expert",
            AgentRole::Mediator => "mediator",
            AgentRole::Judge => "judge",
            AgentRole::Parser => "parser",
        };
        f.write_str(s)
    }
}

/// An API key. Never printed, never serialized.
#[derive(Clone, PartialEq, Eq)]
pub struct Secret(String);

impl Secret {
    pub fn new(value: impl Into<String>) -> Self {
        Self(value.into())
    }

    pub fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Secret(***)")
    }
}

/// Network identity and sampling parameters of one agent.
#[derive(Debug, Clone)]
pub struct AgentSpec {
    pub agent_id: String,
    pub role: AgentRole,
    pub base_url: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub api_key: Option<Secret>,
    /// Budget for all attempts of one call, backoff sleeps excluded.
    pub timeout: Duration,
    pub max_retries: u32,
    /// First backoff delay; doubles on every retry.
    pub backoff_base: Duration,
}

impl AgentSpec {
    pub fn new(
        agent_id: impl Into<String>,
        role: AgentRole,
        base_url: impl Into<String>,
        model: impl Into<String>,
    ) -> Self {
        Self {
            agent_id: agent_id.into(),
            role,
            base_url: base_url.into(),
            model: model.into(),
            temperature: 0.0,
            max_tokens: 1024,
            api_key: None,
            timeout: Duration::from_secs(120),
            max_retries: 3,
            backoff_base: Duration::from_secs(1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.agent_id.trim().is_empty() {
            return Err(Error::Config("agent_id must not be empty".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!(
                "agent `{}`: temperature must be a finite value >= 0",
                self.agent_id
            )));
        }
        if self.max_tokens == 0 {
            return Err(Error::Config(format!("agent `{}`: max_tokens must be positive", self.agent_id)));
        }
        reqwest::Url::parse(&self.base_url).map_err(|e| {
            Error::Config(format!("agent `{}`: invalid base_url `{}`: {e}", self.agent_id, self.base_url))
        })?;
        Ok(())
    }

    /// `{base_url}/chat/completions`
    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

/// Per-call context forwarded to the endpoint as request metadata.
#[derive(Debug, Clone, Default)]
pub struct CallContext {
    pub item_id: Option<String>,
}

impl CallContext {
    pub fn for_item(item_id: impl Into<String>) -> Self {
        Self { item_id: Some(item_id.into()) }
    }
}

/// Header carrying the item id, used by the scripted fixture for lookups.
pub const ITEM_ID_HEADER: &str = "x-item-id";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub total_tokens: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatReply {
    pub text: String,
    pub usage: Option<Usage>,
    /// Wire requests spent on this call (1 + retries).
    pub attempts: u32,
}

#[async_trait]
pub trait Agent: Send + Sync {
    fn id(&self) -> &str;
    fn role(&self) -> AgentRole;
    async fn chat(&self, ctx: &CallContext, messages: &[ChatMessage]) -> Result<ChatReply>;
}

/// Call accounting shared by every agent implementation.
#[derive(Debug, Default)]
pub struct CallStats {
    calls: AtomicU64,
    requests: AtomicU64,
    retries: AtomicU64,
    failures: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallStatsSnapshot {
    /// Logical calls that returned a reply.
    pub calls: u64,
    /// Wire requests sent, including retries.
    pub requests: u64,
    pub retries: u64,
    /// Logical calls that ended in an error.
    pub failures: u64,
}

impl CallStats {
    pub fn record_request(&self) {
        self.requests.fetch_add(1, Ordering::Relaxed);
    }

    pub fn record_retry(&self) {
        self.retries.fetch_add(1, Ordering::Relaxed);
    }

    pub fn record_success(&self) {
        self.calls.fetch_add(1, Ordering::Relaxed);
    }

    pub fn record_failure(&self) {
        self.failures.fetch_add(1, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> CallStatsSnapshot {
        CallStatsSnapshot {
            calls: self.calls.load(Ordering::Relaxed),
            requests: self.requests.load(Ordering::Relaxed),
            retries: self.retries.load(Ordering::Relaxed),
            failures: self.failures.load(Ordering::Relaxed),
        }
    }
}

/// Rejects empty conversations, empty messages, misplaced images and images sent to text-only roles.
pub fn validate_messages(agent_id: &str, role: AgentRole, messages: &[ChatMessage]) -> Result<()> {
    if messages.is_empty() {
        return Err(Error::Precondition(format!("no messages for agent `{agent_id}`")));
    }
    for msg in messages {
        if msg.parts.is_empty() {
            return Err(Error::Precondition(format!("empty message for agent `{agent_id}`")));
        }
        if msg.has_image() {
            if msg.sender != Sender::User {
                return Err(Error::Config("image parts are only allowed on user messages".into()));
            }
            if !role.accepts_images() {
                return Err(Error::Config(format!(
                    "agent `{agent_id}` has text-only role {role} but was sent an image"
                )));
            }
        }
    }
    Ok(())
}
