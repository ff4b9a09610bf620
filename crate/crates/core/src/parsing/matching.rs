use std::time::Duration;

use serde_json::{json, Value};
use tracing::warn;

use super::answer::ParsedAnswer;
use super::similarity::similarity;
use crate::gateway::Secret;
use crate::item::{AnswerOption, OptionLabel};

/// Picks the option for a parsed answer: an explicit label hint wins,
/// otherwise the option whose `"X) text"` is most similar to the answer text.
/// Ties go to the smallest label.
///
/// # Panics
/// If `options` is empty.
pub fn match_option(parsed: &ParsedAnswer, options: &[AnswerOption]) -> OptionLabel {
    let scores: Vec<f64> = options
        .iter()
        .map(|o| similarity(&parsed.answer_text, &o.candidate()))
        .collect();
    pick(parsed, options, &scores)
}

fn pick(parsed: &ParsedAnswer, options: &[AnswerOption], scores: &[f64]) -> OptionLabel {
    assert!(!options.is_empty(), "match_option needs at least one option");
    if let Some(hint) = parsed.label_hint {
        if options.iter().any(|o| o.label == hint) {
            return hint;
        }
    }
    let mut best = (options[0].label, f64::NEG_INFINITY);
    for (opt, &score) in options.iter().zip(scores) {
        if score > best.1 || (score == best.1 && opt.label < best.0) {
            best = (opt.label, score);
        }
    }
    best.0
}

/// Client for an OpenAI-compatible `POST {base_url}/embeddings` endpoint.
#[derive(Debug, Clone)]
pub struct EmbeddingClient {
    pub base_url: String,
    pub model: String,
    pub api_key: Option<Secret>,
    pub timeout: Duration,
    client: reqwest::Client,
}

impl EmbeddingClient {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            api_key: None,
            timeout: Duration::from_secs(30),
            client: reqwest::Client::new(),
        }
    }

    pub async fn embed(&self, inputs: &[String]) -> Result<Vec<Vec<f64>>, String> {
        let mut req = self
            .client
            .post(format!("{}/embeddings", self.base_url.trim_end_matches('/')))
            .timeout(self.timeout)
            .json(&json!({"model": self.model, "input": inputs}));
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key.expose());
        }
        let resp = req.send().await.map_err(|e| e.to_string())?;
        if !resp.status().is_success() {
            return Err(format!("HTTP {}", resp.status()));
        }
        let body: Value = resp.json().await.map_err(|e| e.to_string())?;
        let data = body["data"].as_array().ok_or("reply has no data array")?;
        let vectors: Vec<Vec<f64>> = data
            .iter()
            .map(|d| {
                d["embedding"]
                    .as_array()
                    .map(|v| v.iter().filter_map(Value::as_f64).collect())
                    .ok_or("entry without embedding")
            })
            .collect::<Result<_, _>>()?;
        if vectors.len() != inputs.len() {
            return Err(format!("asked for {} embeddings, got {}", inputs.len(), vectors.len()));
        }
        Ok(vectors)
    }

    /// Cosine similarity mapped onto [0, 1].
    pub fn score(a: &[f64], b: &[f64]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            return if na == nb { 1.0 } else { 0.0 };
        }
        ((dot / (na * nb) + 1.0) / 2.0).clamp(0.0, 1.0)
    }
}

/// Similarity backend used to turn parsed answers into labels.
#[derive(Debug, Clone, Default)]
pub enum OptionMatcher {
    #[default]
    EditDistance,
    /// Falls back to edit distance whenever the endpoint fails.
    Embedding(EmbeddingClient),
}

impl OptionMatcher {
    pub async fn pick(&self, parsed: &ParsedAnswer, options: &[AnswerOption]) -> OptionLabel {
        match self {
            OptionMatcher::EditDistance => match_option(parsed, options),
            OptionMatcher::Embedding(client) => {
                if parsed.label_hint.is_some_and(|h| options.iter().any(|o| o.label == h)) {
                    return match_option(parsed, options);
                }
                let mut inputs = vec![parsed.answer_text.clone()];
                inputs.extend(options.iter().map(AnswerOption::candidate));
                match client.embed(&inputs).await {
                    Ok(vectors) => {
                        let scores: Vec<f64> =
                            vectors[1..].iter().map(|v| EmbeddingClient::score(&vectors[0], v)).collect();
                        pick(parsed, options, &scores)
                    }
                    Err(e) => {
                        warn!(error = %e, "embedding similarity failed, using edit distance");
                        match_option(parsed, options)
                    }
                }
            }
        }
    }
}
