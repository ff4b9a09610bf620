use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Parsed mediator output: whether to discuss, and the question for each expert.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MediatorDecision {
    pub needs_discussion: bool,
    /// Keyed by 1-based expert index.
    pub questions: BTreeMap<usize, String>,
    pub raw_text: String,
}

impl MediatorDecision {
    pub fn no_discussion(raw_text: impl Into<String>) -> Self {
        Self { needs_discussion: false, questions: BTreeMap::new(), raw_text: raw_text.into() }
    }

    pub fn validate(&self, experts: usize) -> Result<()> {
        match (self.needs_discussion, self.questions.is_empty()) {
            (false, false) => Err(Error::Precondition("decision `No` carries questions".into())),
            (true, true) => Err(Error::Precondition("decision `Yes` without any question".into())),
            _ => match self.questions.keys().find(|&&k| k == 0 || k > experts) {
                Some(k) => Err(Error::Precondition(format!(
                    "question for expert {k}, but only {experts} expert(s) configured"
                ))),
                None => Ok(()),
            },
        }
    }

    /// Drops questions for unconfigured experts; returns the dropped indices.
    pub fn restrict_to(&mut self, experts: usize) -> Vec<usize> {
        let dropped: Vec<usize> =
            self.questions.keys().copied().filter(|&k| k == 0 || k > experts).collect();
        for k in &dropped {
            self.questions.remove(k);
        }
        dropped
    }
}

static ARRAY_START: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\[\s*\{").unwrap());
static OBJECT_START: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{").unwrap());
static EXPERT_KEY: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^\s*expert\s*#?\s*(\d+)\s*$").unwrap());

/// Finds the decision array in `raw` and interprets it.
///
/// Every `[{` in the text is a candidate start; the first balanced span that
/// parses as JSON and carries a `Decision` key wins. A bare `{...}` object is
/// accepted when no array qualifies.
pub fn extract_decision(raw: &str) -> Result<MediatorDecision> {
    let mut last_problem = None;
    for start in ARRAY_START.find_iter(raw).map(|m| m.start()) {
        if let Some(span) = balanced_span(raw, start) {
            if let Ok(Value::Array(entries)) = serde_json::from_str::<Value>(&span) {
                match interpret(&entries, raw) {
                    Ok(Some(d)) => return Ok(d),
                    Ok(None) => {}
                    Err(e) => last_problem = Some(e),
                }
            }
        }
    }
    for start in OBJECT_START.find_iter(raw).map(|m| m.start()) {
        if let Some(span) = balanced_span(raw, start) {
            if let Ok(obj @ Value::Object(_)) = serde_json::from_str::<Value>(&span) {
                match interpret(std::slice::from_ref(&obj), raw) {
                    Ok(Some(d)) => return Ok(d),
                    Ok(None) => {}
                    Err(e) => last_problem = Some(e),
                }
            }
        }
    }
    Err(Error::DecisionUnparseable(
        last_problem.unwrap_or_else(|| "no JSON decision array found".into()),
    ))
}

/// `Ok(None)` when the entries carry no `Decision` key at all.
fn interpret(entries: &[Value], raw: &str) -> std::result::Result<Option<MediatorDecision>, String> {
    let mut decision = None;
    let mut questions = BTreeMap::new();
    for entry in entries {
        let Value::Object(map) = entry else { continue };
        for (key, value) in map {
            if key.trim().eq_ignore_ascii_case("decision") {
                decision = Some(parse_yes_no(value).ok_or_else(|| format!("bad Decision value {value}"))?);
            } else if let Some(caps) = EXPERT_KEY.captures(key) {
                let Ok(index) = caps[1].parse::<usize>() else { continue };
                let text = match value {
                    Value::String(s) => s.trim().to_string(),
                    Value::Null => String::new(),
                    other => other.to_string(),
                };
                if !text.is_empty() {
                    questions.insert(index, text);
                }
            }
        }
    }
    let Some(needs_discussion) = decision else { return Ok(None) };
    if !needs_discussion {
        questions.clear();
    } else if questions.is_empty() {
        return Err("decision `Yes` without any expert question".into());
    }
    Ok(Some(MediatorDecision { needs_discussion, questions, raw_text: raw.to_string() }))
}

fn parse_yes_no(value: &Value) -> Option<bool> {
    match value {
        Value::Bool(b) => Some(*b),
        Value::String(s) => {
            let s = s.trim().trim_end_matches(['.', '!']).trim().to_ascii_lowercase();
            match s.as_str() {
                "yes" | "true" => Some(true),
                "no" | "false" => Some(false),
                _ => None,
            }
        }
        _ => None,
    }
}

/// The bracket-balanced span starting at `start`, string-aware. Raw control
/// characters inside strings are escaped so sloppy model output still parses.
fn balanced_span(s: &str, start: usize) -> Option<String> {
    let mut depth = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    let mut out = String::new();
    for c in s[start..].chars() {
        if in_str {
            if escaped {
                escaped = false;
                out.push(c);
                continue;
            }
            match c {
                '\\' => {
                    escaped = true;
                    out.push(c);
                }
                '"' => {
                    in_str = false;
                    out.push(c);
                }
                '\n' => out.push_str("\\n"),
                '\r' => out.push_str("\\r"),
                '\t' => out.push_str("\\t"),
                c if (c as u32) < 0x20 => {}
                c => out.push(c),
            }
            continue;
        }
        out.push(c);
        match c {
            '"' => in_str = true,
            '[' | '{' => depth += 1,
            ']' | '}' => {
                depth = depth.checked_sub(1)?;
                if depth == 0 {
                    return Some(out);
                }
            }
            _ => {}
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn canonical_no() {
        let d = extract_decision(r#"[{"Decision": "No"}]"#).unwrap();
        assert!(!d.needs_discussion);
        assert!(d.questions.is_empty());
    }

    #[test]
    fn canonical_yes() {
        let d = extract_decision(r#"[{"Decision": "Yes", "Expert 1": "a", "Expert 2": "b", "Expert 3": "c"}]"#)
            .unwrap();
        assert!(d.needs_discussion);
        assert_eq!(d.questions.len(), 3);
        assert_eq!(d.questions[&2], "b");
    }

    #[test]
    fn prose_wrapped_lowercase() {
        let d = extract_decision(
            r#"Sure, here is my decision: [{"Decision":"yes","Expert 2":"why B?"}] hope this helps"#,
        )
        .unwrap();
        assert!(d.needs_discussion);
        assert_eq!(d.questions, BTreeMap::from([(2, "why B?".to_string())]));
    }

    #[test]
    fn tolerates_fences_newlines_and_decoy_brackets() {
        let raw = "Notes [1] and [see above].\n```json\n[{\"Decision\": \"Yes\",\n\"Expert 3\": \"line one\nline two\"}]\n```";
        let d = extract_decision(raw).unwrap();
        assert_eq!(d.questions[&3], "line one\nline two");
    }

    #[test]
    fn bare_object_accepted() {
        let d = extract_decision(r#"{"decision": "NO"}"#).unwrap();
        assert!(!d.needs_discussion);
    }

    #[test]
    fn no_ignores_stray_questions() {
        let d = extract_decision(r#"[{"Decision": "No", "Expert 1": "hm"}]"#).unwrap();
        assert!(d.questions.is_empty());
    }

    #[test]
    fn unparseable_inputs() {
        for raw in [
            "",
            "I think everyone agrees.",
            r#"[{"Decision": "Maybe"}]"#,
            r#"[{"Decision": "Yes"}]"#,
            r#"[{"Verdict": "No"}]"#,
            "[{\"Decision\": \"No\"",
        ] {
            assert!(matches!(extract_decision(raw), Err(Error::DecisionUnparseable(_))), "{raw}");
        }
    }

    #[test]
    fn restrict_drops_unknown_experts() {
        let mut d = extract_decision(r#"[{"Decision": "Yes", "Expert 1": "a", "Expert 5": "b"}]"#).unwrap();
        assert!(d.validate(3).is_err());
        assert_eq!(d.restrict_to(3), vec![5]);
        assert!(d.validate(3).is_ok());
    }

    proptest! {
        #[test]
        fn never_panics(raw in ".*") {
            let _ = extract_decision(&raw);
        }

        #[test]
        fn never_panics_on_bracket_soup(raw in r#"[\[\]{}":, a-zA-Z0-9\\]{0,80}"#) {
            let _ = extract_decision(&raw);
        }
    }
}
