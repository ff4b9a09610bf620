//! Decision strategies over the same agent pool: the mediated pipeline and
//! the judgment, voting and single-agent baselines.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::gateway::Agent;
use crate::item::{OptionLabel, VqaItem};
use crate::protocol::{record_turns, ExpertTurn, Pipeline};
use crate::transcript::{JudgmentResult, Transcript, TranscriptBuilder};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum StrategyKind {
    MedOrch,
    Judgment,
    Voting,
    Single(String),
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StrategyKind::MedOrch => f.write_str("medorch"),
            StrategyKind::Judgment => f.write_str("judgment"),
            StrategyKind::Voting => f.write_str("voting"),
            StrategyKind::Single(id) => write!(f, "single:{id}"),
        }
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "medorch" | "ours" => Ok(StrategyKind::MedOrch),
            "judgment" => Ok(StrategyKind::Judgment),
            "voting" => Ok(StrategyKind::Voting),
            other => match other.strip_prefix("single:") {
                Some(id) if !id.is_empty() => Ok(StrategyKind::Single(s.trim()[7..].to_string())),
                _ => Err(Error::Config(format!(
                    "unknown strategy `{s}` (expected medorch, judgment, voting or single:<agent_id>)"
                ))),
            },
        }
    }
}

impl Serialize for StrategyKind {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for StrategyKind {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Most frequent label; ties go to the label of the earliest expert holding one
/// of the tied labels. `labels` is in expert configuration order.
pub fn majority_vote(labels: &[OptionLabel]) -> Option<OptionLabel> {
    let mut counts: BTreeMap<OptionLabel, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(*l).or_default() += 1;
    }
    let top = counts.values().copied().max()?;
    labels.iter().copied().find(|l| counts[l] == top)
}

/// A strategy bound to its agents.
#[derive(Clone)]
pub struct Strategy {
    kind: StrategyKind,
    experts: Vec<Arc<dyn Agent>>,
    mediator: Option<Arc<dyn Agent>>,
    judge: Option<Arc<dyn Agent>>,
    pipeline: Pipeline,
}

impl fmt::Debug for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ids = |v: &[Arc<dyn Agent>]| v.iter().map(|a| a.id().to_string()).collect::<Vec<_>>();
        f.debug_struct("Strategy")
            .field("kind", &self.kind)
            .field("experts", &ids(&self.experts))
            .field("mediator", &self.mediator.as_ref().map(|a| a.id().to_string()))
            .field("judge", &self.judge.as_ref().map(|a| a.id().to_string()))
            .finish_non_exhaustive()
    }
}

impl Strategy {
    pub fn new(
        kind: StrategyKind,
        experts: Vec<Arc<dyn Agent>>,
        mediator: Option<Arc<dyn Agent>>,
        judge: Option<Arc<dyn Agent>>,
        pipeline: Pipeline,
    ) -> Result<Self> {
        if experts.is_empty() {
            return Err(Error::Config(format!("strategy {kind} needs at least one expert")));
        }
        let mut ids = BTreeSet::new();
        let all = experts
            .iter()
            .chain(mediator.iter())
            .chain(judge.iter())
            .chain(pipeline.parser.iter());
        for agent in all {
            if !ids.insert(agent.id().to_string()) {
                return Err(Error::Config(format!("duplicate agent id `{}`", agent.id())));
            }
        }
        match &kind {
            StrategyKind::MedOrch if mediator.is_none() => {
                return Err(Error::Config("strategy medorch requires a mediator".into()))
            }
            StrategyKind::MedOrch | StrategyKind::Judgment if judge.is_none() => {
                return Err(Error::Config(format!("strategy {kind} requires a judge")))
            }
            StrategyKind::Single(id) if !experts.iter().any(|e| e.id() == id) => {
                return Err(Error::Config(format!("strategy {kind}: no expert named `{id}`")))
            }
            _ => {}
        }
        Ok(Self { kind, experts, mediator, judge, pipeline })
    }

    pub fn kind(&self) -> &StrategyKind {
        &self.kind
    }

    pub fn experts(&self) -> &[Arc<dyn Agent>] {
        &self.experts
    }

    pub fn pipeline(&self) -> &Pipeline {
        &self.pipeline
    }

    /// Runs the strategy on one item within the configured item timeout.
    /// The final label is `transcript.label()`; failed items carry `failure`.
    pub async fn decide(&self, item: &VqaItem) -> Result<Transcript> {
        let limit = self.pipeline.config.item_timeout;
        match tokio::time::timeout(limit, self.decide_inner(item)).await {
            Ok(result) => result,
            Err(_) => Ok(TranscriptBuilder::new(&item.id, self.kind.to_string())
                .fail(format!("timed out after {:.1}s", limit.as_secs_f64()))),
        }
    }

    async fn decide_inner(&self, item: &VqaItem) -> Result<Transcript> {
        item.validate()?;
        match &self.kind {
            StrategyKind::MedOrch => {
                let mediator = self.mediator.as_deref().expect("validated at construction");
                let judge = self.judge.as_deref().expect("validated at construction");
                self.pipeline.run_pipeline(item, &self.experts, mediator, judge).await
            }
            StrategyKind::Judgment => self.judgment(item).await,
            StrategyKind::Voting => self.vote(item, &self.experts).await,
            StrategyKind::Single(id) => {
                let expert: Vec<_> = self.experts.iter().filter(|e| e.id() == id).cloned().collect();
                self.vote(item, &expert).await
            }
        }
    }

    async fn judgment(&self, item: &VqaItem) -> Result<Transcript> {
        let mut builder = TranscriptBuilder::new(&item.id, self.kind.to_string());
        let initial = self.pipeline.initial_round(item, &self.experts).await?;
        record_turns(&mut builder, &initial);
        if initial.iter().all(|t| t.response.is_none()) {
            return Ok(builder.fail("every expert failed in the initial round"));
        }
        let prompt = self.pipeline.judge_prompt(item, &initial, None, &[])?;
        let judge = self.judge.as_deref().expect("validated at construction");
        match self.pipeline.judge(item, judge, prompt, &mut builder).await {
            Ok(verdict) => Ok(builder.finish(verdict)),
            Err(reason) => Ok(builder.fail(reason)),
        }
    }

    /// Voting (or single agent, with one expert): parse each answer, take the majority.
    async fn vote(&self, item: &VqaItem, experts: &[Arc<dyn Agent>]) -> Result<Transcript> {
        let mut builder = TranscriptBuilder::new(&item.id, self.kind.to_string());
        let initial: Vec<ExpertTurn> = self.pipeline.initial_round(item, experts).await?;
        record_turns(&mut builder, &initial);
        let mut labels = Vec::new();
        for turn in &initial {
            if let Some(r) = &turn.response {
                let (label, _) = self.pipeline.parse_label(&r.raw_text, item, &mut builder).await;
                labels.push(label);
            }
        }
        let Some(label) = majority_vote(&labels) else {
            return Ok(builder.fail("no expert produced an answer"));
        };
        let tally = labels
            .iter()
            .fold(BTreeMap::<OptionLabel, usize>::new(), |mut m, l| {
                *m.entry(*l).or_default() += 1;
                m
            })
            .iter()
            .map(|(l, n)| format!("{l}={n}"))
            .collect::<Vec<_>>()
            .join(", ");
        Ok(builder.finish(JudgmentResult {
            label,
            option_text: item.option(label).map(|o| o.text.clone()).unwrap_or_default(),
            rationale: format!("majority over {} parsed answer(s): {tally}", labels.len()),
            raw_text: String::new(),
        }))
    }
}
