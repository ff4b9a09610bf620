use std::collections::HashMap;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::gateway::AgentRole;

/// Which kind of expert call a request is, as far as lookup is concerned.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptStage {
    #[default]
    Any,
    Initial,
    Feedback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub item_id: String,
    #[serde(default)]
    pub stage: ScriptStage,
    pub response: String,
}

/// One step of a fault plan. `status: None` (or 2xx) only delays.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Fault {
    #[serde(default)]
    pub status: Option<u16>,
    #[serde(default)]
    pub delay_ms: u64,
}

impl Fault {
    pub fn status(status: u16) -> Self {
        Self { status: Some(status), delay_ms: 0 }
    }

    pub fn delay(ms: u64) -> Self {
        Self { status: None, delay_ms: ms }
    }
}

/// Canned behaviour of one agent.
///
/// Entries sharing an `(item_id, stage)` key are replayed in order, the last
/// one repeating. Lookups prefer an exact stage, then `Any`, then
/// `default_response`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Script {
    pub agent_id: String,
    #[serde(default = "default_role")]
    pub role: AgentRole,
    #[serde(default)]
    pub responses: Vec<ScriptEntry>,
    #[serde(default)]
    pub faults: Vec<Fault>,
    #[serde(default)]
    pub default_response: String,
    /// Added to every successful reply.
    #[serde(default)]
    pub latency_ms: u64,
}

fn default_role() -> AgentRole {
    AgentRole::Expert
}

impl Script {
    pub fn new(agent_id: impl Into<String>, role: AgentRole, default_response: impl Into<String>) -> Self {
        Self {
            agent_id: agent_id.into(),
            role,
            responses: Vec::new(),
            faults: Vec::new(),
            default_response: default_response.into(),
            latency_ms: 0,
        }
    }

    pub fn respond(mut self, item_id: impl Into<String>, stage: ScriptStage, response: impl Into<String>) -> Self {
        self.responses.push(ScriptEntry { item_id: item_id.into(), stage, response: response.into() });
        self
    }

    pub fn with_faults(mut self, faults: Vec<Fault>) -> Self {
        self.faults = faults;
        self
    }

    pub fn with_latency(mut self, ms: u64) -> Self {
        self.latency_ms = ms;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepOutcome {
    Reply(String),
    Fail(u16),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub delay: Duration,
    pub outcome: StepOutcome,
}

#[derive(Debug, Default)]
struct PlayerState {
    fault_cursor: usize,
    replayed: HashMap<(String, ScriptStage), usize>,
}

/// A script plus its replay cursors.
#[derive(Debug)]
pub struct ScriptPlayer {
    script: Script,
    state: Mutex<PlayerState>,
}

impl ScriptPlayer {
    pub fn new(script: Script) -> Self {
        Self { script, state: Mutex::new(PlayerState::default()) }
    }

    pub fn script(&self) -> &Script {
        &self.script
    }

    pub fn next(&self, item_id: Option<&str>, stage: ScriptStage) -> Step {
        let mut state = self.state.lock().expect("script state poisoned");
        if let Some(fault) = self.script.faults.get(state.fault_cursor).cloned() {
            state.fault_cursor += 1;
            if let Some(status) = fault.status.filter(|s| !(200..300).contains(s)) {
                return Step { delay: Duration::from_millis(fault.delay_ms), outcome: StepOutcome::Fail(status) };
            }
            let reply = self.lookup(&mut state, item_id, stage);
            return Step {
                delay: Duration::from_millis(fault.delay_ms + self.script.latency_ms),
                outcome: StepOutcome::Reply(reply),
            };
        }
        let reply = self.lookup(&mut state, item_id, stage);
        Step { delay: Duration::from_millis(self.script.latency_ms), outcome: StepOutcome::Reply(reply) }
    }

    fn lookup(&self, state: &mut PlayerState, item_id: Option<&str>, stage: ScriptStage) -> String {
        let Some(item_id) = item_id else { return self.script.default_response.clone() };
        let candidates = |s: ScriptStage| -> Vec<&ScriptEntry> {
            self.script
                .responses
                .iter()
                .filter(|e| e.item_id == item_id && e.stage == s)
                .collect()
        };
        let (key_stage, entries) = match candidates(stage) {
            v if !v.is_empty() => (stage, v),
            _ => (ScriptStage::Any, candidates(ScriptStage::Any)),
        };
        if entries.is_empty() {
            return self.script.default_response.clone();
        }
        let n = state.replayed.entry((item_id.to_string(), key_stage)).or_default();
        let entry = entries[(*n).min(entries.len() - 1)];
        *n += 1;
        entry.response.clone()
    }
}
