//! Seeded synthetic datasets with scripted experts of known accuracy.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use super::script::{Script, ScriptStage};
use crate::gateway::AgentRole;
use crate::item::{OptionLabel, VqaItem};

const ORGANS: [&str; 8] = ["Heart", "Lung", "Kidney", "Liver", "Spleen", "Brain", "Pancreas", "Stomach"];
const MODALITIES: [&str; 8] = ["CT", "Der", "FP", "MR", "Mic", "OCT", "X-Ray", "US"];

/// Free-text expert answer naming `label` explicitly.
pub fn expert_answer(item: &VqaItem, label: OptionLabel) -> String {
    let text = item.option(label).map(|o| o.text.as_str()).unwrap_or_default();
    format!("After reviewing the image carefully, the findings point to ({label}) {text}.")
}

#[derive(Debug, Clone)]
pub struct OracleSet {
    pub items: Vec<VqaItem>,
    /// `answers[i][k]`: label expert `k` gives on item `i`.
    pub answers: Vec<Vec<OptionLabel>>,
    pub experts: Vec<Script>,
}

/// `n_items` four-option items with uniform gold labels. Expert `k` answers
/// correctly with probability `correctness[k]`, otherwise uniformly among the
/// wrong options.
pub fn oracle_set(n_items: usize, correctness: &[f64], seed: u64) -> OracleSet {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut items = Vec::with_capacity(n_items);
    let mut answers = Vec::with_capacity(n_items);
    for i in 0..n_items {
        let gold = rng.random_range(0..4usize);
        let offset = rng.random_range(0..ORGANS.len());
        let options: Vec<&str> = (0..4).map(|j| ORGANS[(offset + j) % ORGANS.len()]).collect();
        let item = VqaItem::new(format!("syn-{i:05}"), "Which organ is shown in this image?", options)
            .and_then(|it| it.with_gold(OptionLabel::from_index(gold).unwrap().as_char()))
            .expect("synthetic item is valid")
            .with_modality(MODALITIES[i % MODALITIES.len()]);
        let row = correctness
            .iter()
            .map(|&p| {
                let idx = if rng.random_bool(p) {
                    gold
                } else {
                    let wrong = rng.random_range(0..3usize);
                    if wrong >= gold { wrong + 1 } else { wrong }
                };
                OptionLabel::from_index(idx).unwrap()
            })
            .collect();
        items.push(item);
        answers.push(row);
    }
    let experts = scripted_experts(&items, &answers, correctness.len());
    OracleSet { items, answers, experts }
}

/// Scripts `expert1..expertN` answering per `answers`, same text in both stages.
pub fn scripted_experts(items: &[VqaItem], answers: &[Vec<OptionLabel>], n_experts: usize) -> Vec<Script> {
    (0..n_experts)
        .map(|k| {
            let mut s = Script::new(format!("expert{}", k + 1), AgentRole::Expert, "I cannot tell.");
            for (item, row) in items.iter().zip(answers) {
                s = s.respond(&item.id, ScriptStage::Any, expert_answer(item, row[k]));
            }
            s
        })
        .collect()
}
