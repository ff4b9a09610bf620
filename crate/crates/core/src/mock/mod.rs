//! Deterministic scripted agents, in-process and over HTTP.

mod agent;
mod case_study;
mod script;
mod server;
pub mod synthetic;

pub use agent::ScriptedAgent;
pub use case_study::{case_study_fixture, CaseStudy, CASE_ITEM_ID, EXPERT_IDS, JUDGE_ID, MEDIATOR_ID};
pub use script::{Fault, Script, ScriptEntry, ScriptPlayer, ScriptStage, Step, StepOutcome};
pub use server::{serve, LoggedRequest, MockServer, RequestLog};
