use super::answer::{extract_answer_tag, AnswerSource, ParsedAnswer};
use crate::gateway::{Agent, CallContext, ChatMessage};
use crate::item::VqaItem;
use crate::prompts::{Bindings, PromptSet, TemplateId};
use crate::transcript::{Exchange, Stage};

/// Normalizes `raw` through the parser agent.
///
/// If the parser fails, the tag extraction runs on `raw` itself and the
/// result is flagged `degraded`. The exchange is returned for the transcript.
pub async fn refine_via_parser(
    raw: &str,
    item: &VqaItem,
    parser: &dyn Agent,
    prompts: &PromptSet,
) -> (ParsedAnswer, Exchange) {
    let labels = item.labels();
    let prompt = prompts
        .render(
            TemplateId::AnswerRefinement,
            &Bindings::new(0).set("Question", item.question_block()).set("Response of models", raw),
        )
        .expect("answer refinement bindings are complete");
    let ctx = CallContext::for_item(&item.id);
    let (exchange, _) =
        Exchange::run(parser, &ctx, Stage::Parse, prompt.clone(), &[ChatMessage::user(prompt)]).await;
    let parsed = match exchange.text() {
        Some(out) => {
            let tagged = extract_answer_tag(out, &labels);
            if tagged.source == AnswerSource::TaggedExtraction {
                tagged
            } else {
                ParsedAnswer {
                    label_hint: tagged.label_hint,
                    answer_text: out.trim().to_string(),
                    source: AnswerSource::ParserAgent,
                    degraded: false,
                }
            }
        }
        None => ParsedAnswer { degraded: true, ..extract_answer_tag(raw, &labels) },
    };
    (parsed, exchange)
}
