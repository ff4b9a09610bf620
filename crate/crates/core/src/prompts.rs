//! Prompt templates and rendering.
//!
//! Template syntax:
//!
//! * `{Name}` is a placeholder; names may contain spaces and apostrophes.
//! * `{{` and `}}` are literal braces.
//! * `{@each expert|SEP}BODY{@end}` repeats `BODY` once per expert, joined by
//!   `SEP` (`\n` in `SEP` is a newline). Inside `BODY` every `#` becomes the
//!   1-based expert index, in literal text and in placeholder names alike.
//!
//! `Expert count` is bound automatically to the number word for the expert
//! count ("three").
//!
//! Placeholders per template:
//!
//! | template            | placeholders |
//! |---------------------|--------------|
//! | `expert_initial`    | `Question` |
//! | `mediator_socratic` | `Question`, `Response of expert #` |
//! | `expert_feedback`   | `Original question`, `Reviewer's feedback` |
//! | `judge_final`       | `Question`, `Expert #'s response`, `Reviewer's questions for Expert #`, `Expert #'s response for Reviewer's questions` |
//! | `answer_refinement` | `Question`, `Response of models` |

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TemplateId {
    ExpertInitial,
    MediatorSocratic,
    ExpertFeedback,
    JudgeFinal,
    AnswerRefinement,
}

impl TemplateId {
    pub const ALL: [TemplateId; 5] = [
        TemplateId::ExpertInitial,
        TemplateId::MediatorSocratic,
        TemplateId::ExpertFeedback,
        TemplateId::JudgeFinal,
        TemplateId::AnswerRefinement,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TemplateId::ExpertInitial => "expert_initial",
            TemplateId::MediatorSocratic => "mediator_socratic",
            TemplateId::ExpertFeedback => "expert_feedback",
            TemplateId::JudgeFinal => "judge_final",
            TemplateId::AnswerRefinement => "answer_refinement",
        }
    }

    fn default_body(self) -> &'static str {
        match self {
            TemplateId::ExpertInitial => include_str!("../prompts/expert_initial.txt"),
            TemplateId::MediatorSocratic => include_str!("../prompts/mediator_socratic.txt"),
            TemplateId::ExpertFeedback => include_str!("../prompts/expert_feedback.txt"),
            TemplateId::JudgeFinal => include_str!("../prompts/judge_final.txt"),
            TemplateId::AnswerRefinement => include_str!("../prompts/answer_refinement.txt"),
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TemplateId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TemplateId::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::UnknownTemplate(s.to_string()))
    }
}

/// First line of the default feedback prompt; used to fingerprint refinement calls.
pub const FEEDBACK_MARKER: &str = "You are a professional question-answering assistant.";

#[derive(Debug, Clone, PartialEq, Eq)]
enum Node {
    Text(String),
    Slot(String),
    Each { sep: String, body: Vec<Node> },
}

/// A parsed template.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: TemplateId,
    nodes: Vec<Node>,
}

/// Values for one render call.
#[derive(Debug, Clone, Default)]
pub struct Bindings {
    experts: usize,
    values: BTreeMap<String, String>,
}

impl Bindings {
    pub fn new(experts: usize) -> Self {
        Self { experts, values: BTreeMap::new() }
    }

    pub fn set(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.values.insert(name.into(), value.into());
        self
    }

    /// Binds a per-expert placeholder; `#` in `pattern` is replaced with `index`.
    pub fn set_expert(self, index: usize, pattern: &str, value: impl Into<String>) -> Self {
        let name = pattern.replace('#', &index.to_string());
        self.set(name, value)
    }

    pub fn experts(&self) -> usize {
        self.experts
    }
}

impl PromptTemplate {
    pub fn parse(id: TemplateId, body: &str) -> Result<Self> {
        let body = body.strip_suffix('\n').unwrap_or(body);
        let nodes = parse_nodes(id, body)?;
        Ok(Self { id, nodes })
    }

    /// Placeholder names that must be bound for `experts` experts.
    pub fn required_placeholders(&self, experts: usize) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for node in &self.nodes {
            match node {
                Node::Slot(name) if name != EXPERT_COUNT => {
                    out.insert(name.clone());
                }
                Node::Each { body, .. } => {
                    for k in 1..=experts {
                        for inner in body {
                            if let Node::Slot(name) = inner {
                                out.insert(name.replace('#', &k.to_string()));
                            }
                        }
                    }
                }
                _ => {}
            }
        }
        out
    }

    pub fn render(&self, bindings: &Bindings) -> Result<String> {
        let mut out = String::new();
        for node in &self.nodes {
            match node {
                Node::Text(t) => out.push_str(t),
                Node::Slot(name) => out.push_str(&self.lookup(bindings, name)?),
                Node::Each { sep, body } => {
                    for k in 1..=bindings.experts {
                        if k > 1 {
                            out.push_str(sep);
                        }
                        let idx = k.to_string();
                        for inner in body {
                            match inner {
                                Node::Text(t) => out.push_str(&t.replace('#', &idx)),
                                Node::Slot(name) => {
                                    out.push_str(&self.lookup(bindings, &name.replace('#', &idx))?)
                                }
                                Node::Each { .. } => unreachable!("nested each rejected at parse"),
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    fn lookup(&self, bindings: &Bindings, name: &str) -> Result<String> {
        if let Some(v) = bindings.values.get(name) {
            return Ok(v.clone());
        }
        if name == EXPERT_COUNT {
            return Ok(number_word(bindings.experts));
        }
        Err(Error::MissingPlaceholder { template: self.id.to_string(), name: name.to_string() })
    }
}

const EXPERT_COUNT: &str = "Expert count";

fn number_word(n: usize) -> String {
    const WORDS: [&str; 11] =
        ["zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten"];
    WORDS.get(n).map(|w| w.to_string()).unwrap_or_else(|| n.to_string())
}

fn parse_nodes(id: TemplateId, body: &str) -> Result<Vec<Node>> {
    let bad = |msg: String| Error::Config(format!("template `{id}`: {msg}"));
    let mut top: Vec<Node> = Vec::new();
    let mut each: Option<(String, Vec<Node>)> = None;
    let mut text = String::new();
    let mut rest = body;

    fn flush(text: &mut String, into: &mut Vec<Node>) {
        if !text.is_empty() {
            into.push(Node::Text(std::mem::take(text)));
        }
    }

    while let Some(c) = rest.chars().next() {
        if rest.starts_with("{{") {
            text.push('{');
            rest = &rest[2..];
        } else if rest.starts_with("}}") {
            text.push('}');
            rest = &rest[2..];
        } else if c == '{' {
            let end = rest.find('}').ok_or_else(|| bad("unclosed `{`".into()))?;
            let inner = &rest[1..end];
            if inner.contains('{') {
                return Err(bad(format!("nested `{{` in `{inner}`")));
            }
            rest = &rest[end + 1..];
            let target = match each.as_mut() {
                Some((_, nodes)) => nodes,
                None => &mut top,
            };
            flush(&mut text, target);
            if let Some(spec) = inner.strip_prefix("@each ") {
                if each.is_some() {
                    return Err(bad("nested `{@each}` blocks are not supported".into()));
                }
                let (what, sep) = spec.split_once('|').unwrap_or((spec, ""));
                if what.trim() != "expert" {
                    return Err(bad(format!("unknown repeat block `{what}`")));
                }
                each = Some((sep.replace("\\n", "\n"), Vec::new()));
            } else if inner == "@end" {
                let (sep, body) = each.take().ok_or_else(|| bad("`{@end}` without `{@each}`".into()))?;
                top.push(Node::Each { sep, body });
            } else if inner.trim().is_empty() {
                return Err(bad("empty placeholder".into()));
            } else {
                target.push(Node::Slot(inner.to_string()));
            }
        } else if c == '}' {
            return Err(bad("unmatched `}` (use `}}` for a literal brace)".into()));
        } else {
            text.push(c);
            rest = &rest[c.len_utf8()..];
        }
    }
    if each.is_some() {
        return Err(bad("unterminated `{@each}` block".into()));
    }
    flush(&mut text, &mut top);
    Ok(top)
}

/// The five templates in use, defaults optionally overridden from a directory.
#[derive(Debug, Clone)]
pub struct PromptSet {
    templates: BTreeMap<TemplateId, PromptTemplate>,
}

impl Default for PromptSet {
    fn default() -> Self {
        let templates = TemplateId::ALL
            .into_iter()
            .map(|id| {
                let t = PromptTemplate::parse(id, id.default_body()).expect("built-in template parses");
                (id, t)
            })
            .collect();
        Self { templates }
    }
}

impl PromptSet {
    /// Loads `<template_name>.txt` files from `dir` over the defaults.
    pub fn with_overrides(dir: &Path) -> Result<Self> {
        let mut set = Self::default();
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                continue;
            }
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            let id: TemplateId = stem.parse()?;
            let body = std::fs::read_to_string(&path)?;
            set.templates.insert(id, PromptTemplate::parse(id, &body)?);
        }
        Ok(set)
    }

    pub fn template(&self, id: TemplateId) -> &PromptTemplate {
        &self.templates[&id]
    }

    pub fn render(&self, id: TemplateId, bindings: &Bindings) -> Result<String> {
        self.template(id).render(bindings)
    }

    pub fn render_named(&self, name: &str, bindings: &Bindings) -> Result<String> {
        self.render(name.parse()?, bindings)
    }
}
