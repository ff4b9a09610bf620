//! Structured extraction from free-form agent output.

mod answer;
mod decision;
mod matching;
mod refine;
mod similarity;

pub use answer::{extract_answer_tag, strip_answer_tags, AnswerSource, ParsedAnswer};
pub use decision::{extract_decision, MediatorDecision};
pub use matching::{match_option, EmbeddingClient, OptionMatcher};
pub use refine::refine_via_parser;
pub use similarity::{edit_distance, normalize, similarity};
