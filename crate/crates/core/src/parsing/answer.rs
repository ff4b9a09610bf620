use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::item::OptionLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerSource {
    TaggedExtraction,
    ParserAgent,
    FullTextFallback,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedAnswer {
    pub label_hint: Option<OptionLabel>,
    pub answer_text: String,
    pub source: AnswerSource,
    /// Set when the parser agent was configured but could not be used.
    #[serde(default)]
    pub degraded: bool,
}

static ANSWER_TAG: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?is)<answer>(.*?)</answer>").unwrap());

static LABEL_PATTERNS: LazyLock<Vec<Regex>> = LazyLock::new(|| {
    [
        // option: X / option X / Option (X)
        r"(?i)\boption\b\s*[:：]?\s*\(?([a-z])\b",
        // answer: X / answer is X
        r"(?i:\banswer\b)(?:\s+is)?\s*[:：]?\s*\(?([A-Z])(?:$|[\s.,:;)])",
        // (X)
        r"\(([A-Z])\)",
        // X)
        r"\b([A-Z])\)",
        // leading X. / X, / X:
        r"^\s*([A-Z])\s*[.,:]",
        // the whole text is one letter
        r"^\s*\(?([A-Z])\)?\s*\.?\s*$",
    ]
    .iter()
    .map(|p| Regex::new(p).unwrap())
    .collect()
});

/// Every explicit label mention in `text`, by position.
fn label_mentions(text: &str, labels: &[OptionLabel]) -> Vec<(usize, OptionLabel)> {
    let mut found: Vec<(usize, OptionLabel)> = LABEL_PATTERNS
        .iter()
        .flat_map(|re| re.captures_iter(text))
        .filter_map(|caps| {
            let m = caps.get(1)?;
            let c = m.as_str().chars().next()?.to_ascii_uppercase();
            let label = OptionLabel::new(c).ok()?;
            labels.contains(&label).then_some((m.start(), label))
        })
        .collect();
    found.sort();
    found.dedup();
    found
}

/// Takes the last non-empty `<answer>...</answer>` span; without one, falls
/// back to the full text. The label hint is the first explicit label in the
/// tag content, or in fallback mode the single label the text mentions (none
/// if it mentions several).
pub fn extract_answer_tag(raw: &str, labels: &[OptionLabel]) -> ParsedAnswer {
    let tagged = ANSWER_TAG
        .captures_iter(raw)
        .filter_map(|c| {
            let inner = c[1].trim();
            (!inner.is_empty()).then(|| inner.to_string())
        })
        .last();
    match tagged {
        Some(answer_text) => ParsedAnswer {
            label_hint: label_mentions(&answer_text, labels).first().map(|&(_, l)| l),
            answer_text,
            source: AnswerSource::TaggedExtraction,
            degraded: false,
        },
        None => {
            let mentions = label_mentions(raw, labels);
            let first = mentions.first().map(|&(_, l)| l);
            let unique = first.filter(|f| mentions.iter().all(|(_, l)| l == f));
            ParsedAnswer {
                label_hint: unique,
                answer_text: raw.to_string(),
                source: AnswerSource::FullTextFallback,
                degraded: false,
            }
        }
    }
}

/// `raw` with every answer tag span removed, trimmed.
pub fn strip_answer_tags(raw: &str) -> String {
    ANSWER_TAG.replace_all(raw, "").trim().to_string()
}
