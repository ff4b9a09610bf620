//! Ordered, replayable record of one item's run.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::gateway::{Agent, AgentRole, CallContext, ChatMessage};
use crate::item::OptionLabel;
use crate::parsing::MediatorDecision;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Initial,
    Mediator,
    Refined,
    Judge,
    Parse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Prompt,
    Response,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub at: DateTime<Utc>,
    pub actor: String,
    pub role: AgentRole,
    pub stage: Stage,
    pub direction: Direction,
    pub payload: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseStage {
    Initial,
    Refined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertResponse {
    pub agent_id: String,
    /// 1-based position in the configured expert list.
    pub expert: usize,
    pub stage: ResponseStage,
    pub raw_text: String,
    pub parsed_label: Option<OptionLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgmentResult {
    pub label: OptionLabel,
    pub option_text: String,
    pub rationale: String,
    pub raw_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentFailure {
    pub agent_id: String,
    pub stage: Stage,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub item_id: String,
    pub strategy: String,
    pub events: Vec<Event>,
    pub initial: Vec<ExpertResponse>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<MediatorDecision>,
    #[serde(default)]
    pub refined: Vec<ExpertResponse>,
    /// Present iff the item was decided.
    pub verdict: Option<JudgmentResult>,
    pub call_counts: BTreeMap<String, u32>,
    #[serde(default)]
    pub failures: Vec<AgentFailure>,
    #[serde(default)]
    pub degradations: Vec<String>,
    /// Why the item could not be decided.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl Transcript {
    pub fn label(&self) -> Option<OptionLabel> {
        self.verdict.as_ref().map(|v| v.label)
    }

    pub fn is_failed(&self) -> bool {
        self.verdict.is_none()
    }

    pub fn calls(&self, agent_id: &str) -> u32 {
        self.call_counts.get(agent_id).copied().unwrap_or(0)
    }

    /// Calls excluding parser-role agents.
    pub fn protocol_calls(&self) -> u32 {
        let parsers: std::collections::BTreeSet<&str> = self
            .events
            .iter()
            .filter(|e| e.role == AgentRole::Parser)
            .map(|e| e.actor.as_str())
            .collect();
        self.call_counts
            .iter()
            .filter(|(id, _)| !parsers.contains(id.as_str()))
            .map(|(_, n)| n)
            .sum()
    }

    /// Prompt events for one stage.
    pub fn prompts(&self, stage: Stage) -> impl Iterator<Item = &Event> {
        self.events
            .iter()
            .filter(move |e| e.stage == stage && e.direction == Direction::Prompt)
    }

    /// Strictly increasing sequence numbers and Initial < Mediator < Refined < Judge.
    pub fn check_ordering(&self) -> Result<(), String> {
        for pair in self.events.windows(2) {
            if pair[1].seq <= pair[0].seq {
                return Err(format!("sequence {} follows {}", pair[1].seq, pair[0].seq));
            }
        }
        let rank = |s: Stage| match s {
            Stage::Initial => Some(0),
            Stage::Mediator => Some(1),
            Stage::Refined => Some(2),
            Stage::Judge => Some(3),
            Stage::Parse => None,
        };
        let mut highest = 0;
        for e in &self.events {
            if let Some(r) = rank(e.stage) {
                if r < highest {
                    return Err(format!("{:?} event {} after a later stage", e.stage, e.seq));
                }
                highest = r;
            }
        }
        Ok(())
    }

    /// Same transcript with every timestamp set to the Unix epoch.
    pub fn without_timestamps(&self) -> Transcript {
        let mut t = self.clone();
        for e in &mut t.events {
            e.at = DateTime::<Utc>::UNIX_EPOCH;
        }
        t
    }
}

/// One prompt/response round trip with one agent.
#[derive(Debug, Clone)]
pub struct Exchange {
    pub agent_id: String,
    pub role: AgentRole,
    pub stage: Stage,
    pub prompt: String,
    pub sent_at: DateTime<Utc>,
    pub received_at: DateTime<Utc>,
    pub outcome: Result<String, String>,
}

impl Exchange {
    /// Sends `messages`; `prompt` is the text recorded in the transcript.
    pub async fn run(
        agent: &dyn Agent,
        ctx: &CallContext,
        stage: Stage,
        prompt: String,
        messages: &[ChatMessage],
    ) -> (Exchange, Option<crate::error::Error>) {
        let sent_at = Utc::now();
        let result = agent.chat(ctx, messages).await;
        let received_at = Utc::now();
        let (outcome, err) = match result {
            Ok(reply) => (Ok(reply.text), None),
            Err(e) => (Err(e.to_string()), Some(e)),
        };
        let exchange = Exchange {
            agent_id: agent.id().to_string(),
            role: agent.role(),
            stage,
            prompt,
            sent_at,
            received_at,
            outcome,
        };
        (exchange, err)
    }

    pub fn text(&self) -> Option<&str> {
        self.outcome.as_deref().ok()
    }
}

/// Builds a [`Transcript`]; sequence numbers are assigned in recording order.
#[derive(Debug)]
pub struct TranscriptBuilder {
    transcript: Transcript,
    next_seq: u64,
}

impl TranscriptBuilder {
    pub fn new(item_id: impl Into<String>, strategy: impl Into<String>) -> Self {
        Self {
            transcript: Transcript {
                item_id: item_id.into(),
                strategy: strategy.into(),
                events: Vec::new(),
                initial: Vec::new(),
                decision: None,
                refined: Vec::new(),
                verdict: None,
                call_counts: BTreeMap::new(),
                failures: Vec::new(),
                degradations: Vec::new(),
                failure: None,
            },
            next_seq: 0,
        }
    }

    fn push(&mut self, ex: &Exchange, at: DateTime<Utc>, direction: Direction, payload: String) {
        self.transcript.events.push(Event {
            seq: self.next_seq,
            at,
            actor: ex.agent_id.clone(),
            role: ex.role,
            stage: ex.stage,
            direction,
            payload,
        });
        self.next_seq += 1;
    }

    /// Appends the prompt event, then the response event or a failure entry.
    pub fn record(&mut self, ex: &Exchange) {
        self.push(ex, ex.sent_at, Direction::Prompt, ex.prompt.clone());
        *self.transcript.call_counts.entry(ex.agent_id.clone()).or_default() += 1;
        match &ex.outcome {
            Ok(text) => self.push(ex, ex.received_at, Direction::Response, text.clone()),
            Err(reason) => self.transcript.failures.push(AgentFailure {
                agent_id: ex.agent_id.clone(),
                stage: ex.stage,
                reason: reason.clone(),
            }),
        }
    }

    pub fn degrade(&mut self, note: impl Into<String>) {
        self.transcript.degradations.push(note.into());
    }

    pub fn push_initial(&mut self, r: ExpertResponse) {
        self.transcript.initial.push(r);
    }

    pub fn push_refined(&mut self, r: ExpertResponse) {
        self.transcript.refined.push(r);
    }

    pub fn set_decision(&mut self, d: MediatorDecision) {
        self.transcript.decision = Some(d);
    }

    pub fn finish(mut self, verdict: JudgmentResult) -> Transcript {
        self.transcript.verdict = Some(verdict);
        self.transcript
    }

    pub fn fail(mut self, reason: impl Into<String>) -> Transcript {
        self.transcript.failure = Some(reason.into());
        self.transcript
    }
}
