//! TOML run configuration: role-grouped agent blocks plus run settings.
//!
//! ```toml
//! strategy = "medorch"
//! parallelism = 4
//!
//! [[experts]]
//! id = "expert1"
//! base_url = "http://127.0.0.1:8080/v1"
//! model = "llava-med"
//! api_key = "${EXPERT_KEY}"
//!
//! [mediator]
//! id = "mediator"
//! base_url = "http://127.0.0.1:8081/v1"
//! model = "qwen2.5-7b"
//!
//! [judge]
//! id = "judge"
//! base_url = "http://127.0.0.1:8081/v1"
//! model = "qwen2.5-7b"
//! ```
//!
//! `${VAR}` is expanded from the environment in `api_key` only.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::gateway::{Agent, AgentRole, AgentSpec, Gateway, RequestGate, Secret};
use crate::parsing::{EmbeddingClient, OptionMatcher};
use crate::prompts::PromptSet;
use crate::protocol::{Pipeline, PipelineConfig};
use crate::strategy::{Strategy, StrategyKind};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentBlock {
    pub id: String,
    pub base_url: String,
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default)]
    pub api_key: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityBackend {
    #[default]
    EditDistance,
    Embedding,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimilarityBlock {
    #[serde(default)]
    pub backend: SimilarityBackend,
    pub base_url: Option<String>,
    pub model: Option<String>,
    pub api_key: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_strategy")]
    pub strategy: StrategyKind,
    #[serde(default)]
    pub experts: Vec<AgentBlock>,
    pub mediator: Option<AgentBlock>,
    pub judge: Option<AgentBlock>,
    pub parser: Option<AgentBlock>,
    #[serde(default)]
    pub similarity: SimilarityBlock,
    /// Items evaluated concurrently.
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    /// Concurrent expert calls per round, 0 for all.
    #[serde(default)]
    pub expert_parallelism: usize,
    #[serde(default = "default_item_timeout")]
    pub item_timeout_secs: f64,
    #[serde(default)]
    pub resume: bool,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub prompt_dir: Option<PathBuf>,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_max_per_endpoint")]
    pub max_per_endpoint: usize,
}

fn default_max_tokens() -> u32 {
    1024
}
fn default_timeout_secs() -> f64 {
    120.0
}
fn default_retries() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    1000
}
fn default_strategy() -> StrategyKind {
    StrategyKind::MedOrch
}
fn default_parallelism() -> usize {
    4
}
fn default_item_timeout() -> f64 {
    300.0
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}
fn default_max_in_flight() -> usize {
    64
}
fn default_max_per_endpoint() -> usize {
    16
}

/// Expands `${VAR}` references; a missing variable is a configuration error.
fn interpolate(value: &str, env: &dyn Fn(&str) -> Option<String>) -> Result<String> {
    let mut out = String::new();
    let mut rest = value;
    while let Some(start) = rest.find("${") {
        out.push_str(&rest[..start]);
        let end = rest[start..]
            .find('}')
            .ok_or_else(|| Error::Config(format!("unterminated `${{` in `{value}`")))?;
        let name = &rest[start + 2..start + end];
        let v = env(name).ok_or_else(|| Error::Config(format!("environment variable `{name}` is not set")))?;
        out.push_str(&v);
        rest = &rest[start + end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

fn secs(v: f64, what: &str) -> Result<Duration> {
    Duration::try_from_secs_f64(v).map_err(|_| Error::Config(format!("{what} must be a non-negative number of seconds")))
}

impl AgentBlock {
    fn spec(&self, role: AgentRole, env: &dyn Fn(&str) -> Option<String>) -> Result<AgentSpec> {
        let mut spec = AgentSpec::new(&self.id, role, &self.base_url, &self.model);
        spec.temperature = self.temperature;
        spec.max_tokens = self.max_tokens;
        spec.api_key = self.api_key.as_deref().map(|k| interpolate(k, env).map(Secret::new)).transpose()?;
        spec.timeout = secs(self.timeout_secs, "timeout_secs")?;
        spec.max_retries = self.max_retries;
        spec.backoff_base = Duration::from_millis(self.backoff_ms);
        spec.validate()?;
        Ok(spec)
    }
}

impl RunConfig {
    /// Reads a config file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        if let Some(dir) = &cfg.prompt_dir {
            if dir.is_relative() {
                cfg.prompt_dir = Some(base.join(dir));
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks that every role the strategy needs is present.
    pub fn validate_for(&self, kind: &StrategyKind) -> Result<()> {
        if self.experts.is_empty() {
            return Err(Error::Config("at least one [[experts]] block is required".into()));
        }
        match kind {
            StrategyKind::MedOrch if self.mediator.is_none() => {
                Err(Error::Config("strategy medorch requires a [mediator] block".into()))
            }
            StrategyKind::MedOrch | StrategyKind::Judgment if self.judge.is_none() => {
                Err(Error::Config(format!("strategy {kind} requires a [judge] block")))
            }
            StrategyKind::Single(id) if !self.experts.iter().any(|e| &e.id == id) => {
                Err(Error::Config(format!("strategy {kind}: no expert with id `{id}`")))
            }
            _ => Ok(()),
        }
    }

    pub fn gateway(&self) -> Gateway {
        Gateway::new(RequestGate::new(self.max_in_flight.max(1), self.max_per_endpoint.max(1)))
    }

    /// Agent specs in configuration order, `api_key` interpolated from `env`.
    pub fn specs(&self, env: &dyn Fn(&str) -> Option<String>) -> Result<Vec<AgentSpec>> {
        let mut out = Vec::new();
        for e in &self.experts {
            out.push(e.spec(AgentRole::Expert, env)?);
        }
        let singles = [
            (&self.mediator, AgentRole::Mediator),
            (&self.judge, AgentRole::Judge),
            (&self.parser, AgentRole::Parser),
        ];
        for (block, role) in singles {
            if let Some(b) = block {
                out.push(b.spec(role, env)?);
            }
        }
        Ok(out)
    }

    pub fn pipeline(&self, parser: Option<Arc<dyn Agent>>) -> Result<Pipeline> {
        let prompts = match &self.prompt_dir {
            Some(dir) => PromptSet::with_overrides(dir)?,
            None => PromptSet::default(),
        };
        let matcher = match self.similarity.backend {
            SimilarityBackend::EditDistance => OptionMatcher::EditDistance,
            SimilarityBackend::Embedding => {
                let (Some(url), Some(model)) = (&self.similarity.base_url, &self.similarity.model) else {
                    return Err(Error::Config("embedding similarity needs base_url and model".into()));
                };
                let mut client = EmbeddingClient::new(url, model);
                client.api_key = self
                    .similarity
                    .api_key
                    .as_deref()
                    .map(|k| interpolate(k, &|n| std::env::var(n).ok()).map(Secret::new))
                    .transpose()?;
                OptionMatcher::Embedding(client)
            }
        };
        Ok(Pipeline {
            prompts: Arc::new(prompts),
            matcher,
            parser,
            config: PipelineConfig {
                expert_parallelism: self.expert_parallelism,
                item_timeout: secs(self.item_timeout_secs, "item_timeout_secs")?,
            },
        })
    }

    /// HTTP agents for every block, assembled into a strategy
    /// (`kind` overrides the configured one).
    pub fn build_strategy(&self, kind: Option<StrategyKind>) -> Result<Strategy> {
        let kind = kind.unwrap_or_else(|| self.strategy.clone());
        self.validate_for(&kind)?;
        let gateway = self.gateway();
        let env = |name: &str| std::env::var(name).ok();
        let mut experts: Vec<Arc<dyn Agent>> = Vec::new();
        let (mut mediator, mut judge, mut parser) = (None, None, None);
        for spec in self.specs(&env)? {
            let role = spec.role;
            let agent: Arc<dyn Agent> = gateway.agent(spec)?;
            match role {
                AgentRole::Expert => experts.push(agent),
                AgentRole::Mediator => mediator = Some(agent),
                AgentRole::Judge => judge = Some(agent),
                AgentRole::Parser => parser = Some(agent),
            }
        }
        let pipeline = self.pipeline(parser)?;
        Strategy::new(kind, experts, mediator, judge, pipeline)
    }
}
