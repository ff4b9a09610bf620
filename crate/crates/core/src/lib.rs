//! Mediator-guided multi-agent orchestration for multiple-choice visual
//! question answering, with baselines and an evaluation harness.
//!
//! Expert agents answer an item in parallel, a mediator decides whether the
//! answers need discussion and, if so, asks each expert one targeted
//! question, the experts refine once, and a judge picks the final option.

pub mod config;
pub mod error;
pub mod eval;
pub mod gateway;
pub mod item;
pub mod mock;
pub mod parsing;
pub mod prompts;
pub mod protocol;
pub mod strategy;
pub mod transcript;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use eval::{compute_gap, load_dataset, run_eval, Dataset, EvalConfig, EvalReport, ResultRecord};
pub use gateway::{Agent, AgentRole, AgentSpec, CallContext, ChatMessage, Gateway, HttpAgent};
pub use item::{AnswerOption, ImageData, OptionLabel, VqaItem};
pub use parsing::{extract_decision, match_option, MediatorDecision, ParsedAnswer};
pub use protocol::{Pipeline, PipelineConfig};
pub use strategy::{majority_vote, Strategy, StrategyKind};
pub use transcript::{JudgmentResult, Transcript};
