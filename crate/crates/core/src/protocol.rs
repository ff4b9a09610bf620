//! The mediator-guided pipeline: initial round, one mediator pass, an
//! optional Socratic round, then judgment.

use std::sync::Arc;
use std::time::Duration;

use futures::stream::{self, StreamExt};

use crate::error::{Error, Result};
use crate::gateway::{Agent, CallContext, ChatMessage};
use crate::item::{OptionLabel, VqaItem};
use crate::parsing::{
    extract_answer_tag, extract_decision, match_option, refine_via_parser, strip_answer_tags,
    MediatorDecision, OptionMatcher, ParsedAnswer,
};
use crate::prompts::{Bindings, PromptSet, TemplateId};
use crate::transcript::{
    Exchange, ExpertResponse, JudgmentResult, ResponseStage, Stage, Transcript, TranscriptBuilder,
};

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    /// Concurrent expert calls within a round; 0 means all at once.
    pub expert_parallelism: usize,
    /// Wall-clock limit for one item.
    pub item_timeout: Duration,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self { expert_parallelism: 0, item_timeout: Duration::from_secs(300) }
    }
}

/// One expert call within a round.
#[derive(Debug, Clone)]
pub struct ExpertTurn {
    /// 1-based configuration index.
    pub expert: usize,
    pub exchange: Exchange,
    /// `None` when the agent failed.
    pub response: Option<ExpertResponse>,
}

/// Shared machinery for every strategy: prompts, answer parsing, fan-out.
#[derive(Clone)]
pub struct Pipeline {
    pub prompts: Arc<PromptSet>,
    pub matcher: OptionMatcher,
    pub parser: Option<Arc<dyn Agent>>,
    pub config: PipelineConfig,
}

impl Default for Pipeline {
    fn default() -> Self {
        Self {
            prompts: Arc::new(PromptSet::default()),
            matcher: OptionMatcher::default(),
            parser: None,
            config: PipelineConfig::default(),
        }
    }
}

fn user_message(text: String, item: &VqaItem) -> ChatMessage {
    match &item.image {
        Some(img) => ChatMessage::user_with_image(text, img),
        None => ChatMessage::user(text),
    }
}

impl Pipeline {
    fn fan_out(&self, n: usize) -> usize {
        match self.config.expert_parallelism {
            0 => n.max(1),
            p => p,
        }
    }

    pub fn expert_prompt(&self, item: &VqaItem) -> Result<String> {
        self.prompts.render(TemplateId::ExpertInitial, &Bindings::new(0).set("Question", item.question_block()))
    }

    /// Label from tag extraction and edit-distance matching only; no agent calls.
    pub fn quick_label(&self, raw: &str, item: &VqaItem) -> OptionLabel {
        match_option(&extract_answer_tag(raw, &item.labels()), &item.options)
    }

    /// Parses `raw` into a label, through the parser agent when one is configured.
    pub async fn parse_label(&self, raw: &str, item: &VqaItem, builder: &mut TranscriptBuilder) -> (OptionLabel, ParsedAnswer) {
        let parsed = match &self.parser {
            Some(parser) => {
                let (parsed, exchange) = refine_via_parser(raw, item, parser.as_ref(), &self.prompts).await;
                builder.record(&exchange);
                if parsed.degraded {
                    builder.degrade(format!("parser `{}` unavailable; used direct tag extraction", parser.id()));
                }
                parsed
            }
            None => extract_answer_tag(raw, &item.labels()),
        };
        let label = self.matcher.pick(&parsed, &item.options).await;
        (label, parsed)
    }

    /// Every expert answers the item once, concurrently. Output follows
    /// configuration order whatever the completion order.
    pub async fn initial_round(&self, item: &VqaItem, experts: &[Arc<dyn Agent>]) -> Result<Vec<ExpertTurn>> {
        if experts.is_empty() {
            return Err(Error::Precondition("initial round needs at least one expert".into()));
        }
        let prompt = self.expert_prompt(item)?;
        let ctx = CallContext::for_item(&item.id);
        let turns = stream::iter(experts.iter().enumerate())
            .map(|(i, agent)| {
                let prompt = prompt.clone();
                let ctx = &ctx;
                async move {
                    let messages = [user_message(prompt.clone(), item)];
                    let (exchange, _) = Exchange::run(agent.as_ref(), ctx, Stage::Initial, prompt, &messages).await;
                    let response = exchange.text().map(|raw| ExpertResponse {
                        agent_id: agent.id().to_string(),
                        expert: i + 1,
                        stage: ResponseStage::Initial,
                        raw_text: raw.to_string(),
                        parsed_label: Some(self.quick_label(raw, item)),
                    });
                    ExpertTurn { expert: i + 1, exchange, response }
                }
            })
            .buffered(self.fan_out(experts.len()))
            .collect::<Vec<_>>()
            .await;
        Ok(turns)
    }

    /// Asks each questioned expert its own mediator question, once.
    pub async fn socratic_round(
        &self,
        decision: &MediatorDecision,
        item: &VqaItem,
        experts: &[Arc<dyn Agent>],
        initial: &[ExpertTurn],
    ) -> Result<Vec<ExpertTurn>> {
        if !decision.needs_discussion {
            return Err(Error::Precondition("socratic round requires a `Yes` decision".into()));
        }
        decision.validate(experts.len())?;
        let ctx = CallContext::for_item(&item.id);
        let question_block = item.question_block();
        let turns = stream::iter(decision.questions.iter())
            .map(|(&k, question)| {
                let agent = &experts[k - 1];
                let first = initial.iter().find(|t| t.expert == k);
                let ctx = &ctx;
                let question_block = &question_block;
                async move {
                    let prompt = self.prompts.render(
                        TemplateId::ExpertFeedback,
                        &Bindings::new(0)
                            .set("Original question", question_block.as_str())
                            .set("Reviewer's feedback", question.as_str()),
                    )?;
                    let messages = match first.and_then(|t| t.response.as_ref().map(|r| (t, r))) {
                        Some((turn, response)) => vec![
                            user_message(turn.exchange.prompt.clone(), item),
                            ChatMessage::assistant(response.raw_text.clone()),
                            ChatMessage::user(prompt.clone()),
                        ],
                        None => vec![user_message(prompt.clone(), item)],
                    };
                    let (exchange, _) = Exchange::run(agent.as_ref(), ctx, Stage::Refined, prompt, &messages).await;
                    let response = exchange.text().map(|raw| ExpertResponse {
                        agent_id: agent.id().to_string(),
                        expert: k,
                        stage: ResponseStage::Refined,
                        raw_text: raw.to_string(),
                        parsed_label: Some(self.quick_label(raw, item)),
                    });
                    Ok(ExpertTurn { expert: k, exchange, response })
                }
            })
            .buffered(self.fan_out(decision.questions.len()))
            .collect::<Vec<Result<_>>>()
            .await;
        turns.into_iter().collect()
    }

    fn mediator_prompt(&self, item: &VqaItem, initial: &[ExpertTurn]) -> Result<String> {
        let bindings = initial.iter().fold(
            Bindings::new(initial.len()).set("Question", item.question_block()),
            |b, t| {
                let text = match &t.response {
                    Some(r) => r.raw_text.clone(),
                    None => format!("[Expert {} did not respond]", t.expert),
                };
                b.set_expert(t.expert, "Response of expert #", text)
            },
        );
        self.prompts.render(TemplateId::MediatorSocratic, &bindings)
    }

    /// Judge prompt; with `decision = None` (judgment baseline) the reviewer sections are empty.
    pub fn judge_prompt(
        &self,
        item: &VqaItem,
        initial: &[ExpertTurn],
        decision: Option<&MediatorDecision>,
        refined: &[ExpertTurn],
    ) -> Result<String> {
        let mut b = Bindings::new(initial.len()).set("Question", item.question_block());
        for t in initial {
            let k = t.expert;
            let first = match &t.response {
                Some(r) => r.raw_text.clone(),
                None => "[no response: agent unavailable]".to_string(),
            };
            let question = decision.and_then(|d| d.questions.get(&k)).cloned().unwrap_or_default();
            let answer = match refined.iter().find(|r| r.expert == k) {
                Some(ExpertTurn { response: Some(r), .. }) => r.raw_text.clone(),
                Some(_) => format!("{first} [no refinement available]"),
                None => String::new(),
            };
            b = b
                .set_expert(k, "Expert #'s response", first)
                .set_expert(k, "Reviewer's questions for Expert #", question)
                .set_expert(k, "Expert #'s response for Reviewer's questions", answer);
        }
        self.prompts.render(TemplateId::JudgeFinal, &b)
    }

    /// Calls the judge and turns its reply into a verdict; `Err` holds the failure reason.
    pub async fn judge(
        &self,
        item: &VqaItem,
        judge: &dyn Agent,
        prompt: String,
        builder: &mut TranscriptBuilder,
    ) -> std::result::Result<JudgmentResult, String> {
        let ctx = CallContext::for_item(&item.id);
        let messages = [ChatMessage::user(prompt.clone())];
        let (exchange, err) = Exchange::run(judge, &ctx, Stage::Judge, prompt, &messages).await;
        builder.record(&exchange);
        if let Some(e) = err {
            return Err(format!("judge unavailable: {e}"));
        }
        let raw = exchange.text().unwrap_or_default().to_string();
        let (label, _) = self.parse_label(&raw, item, builder).await;
        Ok(JudgmentResult {
            label,
            option_text: item.option(label).map(|o| o.text.clone()).unwrap_or_default(),
            rationale: strip_answer_tags(&raw),
            raw_text: raw,
        })
    }

    /// One mediator call, one identical re-ask if the reply does not parse,
    /// then degradation to no discussion. `Err` means the mediator is unreachable.
    async fn mediate(
        &self,
        item: &VqaItem,
        mediator: &dyn Agent,
        prompt: String,
        experts: usize,
        builder: &mut TranscriptBuilder,
    ) -> std::result::Result<MediatorDecision, String> {
        let ctx = CallContext::for_item(&item.id);
        let mut last_raw = String::new();
        for attempt in 0..2 {
            let messages = [ChatMessage::user(prompt.clone())];
            let (exchange, err) = Exchange::run(mediator, &ctx, Stage::Mediator, prompt.clone(), &messages).await;
            builder.record(&exchange);
            if let Some(e) = err {
                return Err(format!("mediator unavailable: {e}"));
            }
            last_raw = exchange.text().unwrap_or_default().to_string();
            match extract_decision(&last_raw) {
                Ok(mut decision) => {
                    let dropped = decision.restrict_to(experts);
                    if !dropped.is_empty() {
                        builder.degrade(format!("mediator questioned unconfigured expert(s) {dropped:?}; ignored"));
                    }
                    if decision.needs_discussion && decision.questions.is_empty() {
                        builder.degrade("mediator decision `Yes` named no configured expert; treated as `No`");
                        return Ok(MediatorDecision::no_discussion(last_raw));
                    }
                    return Ok(decision);
                }
                Err(e) if attempt == 0 => builder.degrade(format!("{e}; re-asking the mediator once")),
                Err(e) => builder.degrade(format!("{e}; degraded to no discussion")),
            }
        }
        Ok(MediatorDecision::no_discussion(last_raw))
    }

    /// The full protocol for one item. Agent failures end up in the
    /// transcript; `Err` is reserved for violated preconditions.
    pub async fn run_pipeline(
        &self,
        item: &VqaItem,
        experts: &[Arc<dyn Agent>],
        mediator: &dyn Agent,
        judge: &dyn Agent,
    ) -> Result<Transcript> {
        item.validate()?;
        let mut builder = TranscriptBuilder::new(&item.id, "medorch");
        let initial = self.initial_round(item, experts).await?;
        record_turns(&mut builder, &initial);
        if initial.iter().all(|t| t.response.is_none()) {
            return Ok(builder.fail("every expert failed in the initial round"));
        }

        let prompt = self.mediator_prompt(item, &initial)?;
        let decision = match self.mediate(item, mediator, prompt, experts.len(), &mut builder).await {
            Ok(d) => d,
            Err(reason) => return Ok(builder.fail(reason)),
        };
        builder.set_decision(decision.clone());

        let refined = if decision.needs_discussion {
            self.socratic_round(&decision, item, experts, &initial).await?
        } else {
            Vec::new()
        };
        record_turns(&mut builder, &refined);
        for t in refined.iter().filter(|t| t.response.is_none()) {
            builder.degrade(format!("expert {} failed to refine; judge sees its initial answer", t.expert));
        }

        let prompt = self.judge_prompt(item, &initial, Some(&decision), &refined)?;
        match self.judge(item, judge, prompt, &mut builder).await {
            Ok(verdict) => Ok(builder.finish(verdict)),
            Err(reason) => Ok(builder.fail(reason)),
        }
    }
}

/// Records exchanges in configuration order and keeps the successful responses.
pub fn record_turns(builder: &mut TranscriptBuilder, turns: &[ExpertTurn]) {
    for t in turns {
        builder.record(&t.exchange);
        if let Some(r) = &t.response {
            match r.stage {
                ResponseStage::Initial => builder.push_initial(r.clone()),
                ResponseStage::Refined => builder.push_refined(r.clone()),
            }
        }
    }
}
