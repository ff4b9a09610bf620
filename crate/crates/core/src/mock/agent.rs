use std::sync::Arc;

use async_trait::async_trait;

use super::script::{Script, ScriptPlayer, ScriptStage, StepOutcome};
use super::server::RequestLog;
use crate::error::{Error, Result};
use crate::gateway::{
    validate_messages, Agent, AgentRole, CallContext, CallStats, CallStatsSnapshot, ChatMessage,
    ChatReply, Sender,
};
use crate::prompts::FEEDBACK_MARKER;

/// In-process agent replaying a [`Script`]. Fault steps fail the call
/// outright; there is no retry layer in between.
pub struct ScriptedAgent {
    player: ScriptPlayer,
    stats: CallStats,
    log: Option<Arc<RequestLog>>,
}

impl ScriptedAgent {
    pub fn new(script: Script) -> Self {
        Self { player: ScriptPlayer::new(script), stats: CallStats::default(), log: None }
    }

    /// Also appends every call to `log`.
    pub fn with_log(mut self, log: Arc<RequestLog>) -> Self {
        self.log = Some(log);
        self
    }

    pub fn stats(&self) -> CallStatsSnapshot {
        self.stats.snapshot()
    }
}

/// Feedback calls are the only multi-turn ones; the marker check covers
/// single-turn feedback prompts.
pub(crate) fn stage_of(messages: &[ChatMessage]) -> ScriptStage {
    let multi_turn = messages.iter().any(|m| m.sender == Sender::Assistant);
    let marked = messages.iter().rev().find(|m| m.sender == Sender::User).is_some_and(|m| m.text().contains(FEEDBACK_MARKER));
    if multi_turn || marked {
        ScriptStage::Feedback
    } else {
        ScriptStage::Initial
    }
}

#[async_trait]
impl Agent for ScriptedAgent {
    fn id(&self) -> &str {
        &self.player.script().agent_id
    }

    fn role(&self) -> AgentRole {
        self.player.script().role
    }

    async fn chat(&self, ctx: &CallContext, messages: &[ChatMessage]) -> Result<ChatReply> {
        validate_messages(self.id(), self.role(), messages)?;
        let stage = stage_of(messages);
        self.stats.record_request();
        let step = self.player.next(ctx.item_id.as_deref(), stage);
        if let Some(log) = &self.log {
            let body = serde_json::json!({
                "model": self.id(),
                "messages": messages.iter().map(ChatMessage::to_wire).collect::<Vec<_>>(),
            });
            let status = match step.outcome {
                StepOutcome::Reply(_) => 200,
                StepOutcome::Fail(s) => s,
            };
            log.append(self.id(), ctx.item_id.clone(), stage, body, status);
        }
        if !step.delay.is_zero() {
            tokio::time::sleep(step.delay).await;
        }
        match step.outcome {
            StepOutcome::Reply(text) => {
                self.stats.record_success();
                Ok(ChatReply { text, usage: None, attempts: 1 })
            }
            StepOutcome::Fail(status) => {
                self.stats.record_failure();
                Err(Error::AgentUnavailable {
                    agent_id: self.id().to_string(),
                    attempts: 1,
                    reason: format!("scripted fault HTTP {status}"),
                })
            }
        }
    }
}
