use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::item::{AnswerOption, ImageData, OptionLabel, VqaItem};

#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub items: Vec<VqaItem>,
    pub image_root: Option<PathBuf>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, items: Vec<VqaItem>) -> Self {
        Self { name: name.into(), items, image_root: None }
    }

    pub fn get(&self, id: &str) -> Option<&VqaItem> {
        self.items.iter().find(|i| i.id == id)
    }

    /// The first `n` items, in file order.
    pub fn truncated(&self, n: usize) -> Dataset {
        Dataset {
            name: self.name.clone(),
            items: self.items.iter().take(n).cloned().collect(),
            image_root: self.image_root.clone(),
        }
    }
}

#[derive(Deserialize)]
struct Line {
    id: String,
    question: String,
    options: Vec<LineOption>,
    answer: String,
    #[serde(default)]
    image: Option<String>,
    #[serde(default)]
    modality: Option<String>,
}

#[derive(Deserialize)]
struct LineOption {
    label: String,
    text: String,
}

/// Reads a JSON-lines dataset. Image paths resolve against `image_root`,
/// defaulting to the dataset's directory, and are read eagerly.
pub fn load_dataset(path: &Path, image_root: Option<&Path>) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    let root = image_root
        .map(Path::to_path_buf)
        .or_else(|| path.parent().map(Path::to_path_buf))
        .unwrap_or_default();
    let mut ids = BTreeSet::new();
    let mut items = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let schema = |message: String| Error::Schema { line, message };
        let parsed: Line = serde_json::from_str(raw).map_err(|e| schema(e.to_string()))?;
        let options = parsed
            .options
            .iter()
            .map(|o| {
                let mut chars = o.label.trim().chars();
                match (chars.next(), chars.next()) {
                    (Some(c), None) => AnswerOption::new(c, o.text.clone()),
                    _ => Err(Error::InvalidItem(format!("bad option label `{}`", o.label))),
                }
            })
            .collect::<Result<Vec<_>>>()
            .map_err(|e| schema(e.to_string()))?;
        let gold: OptionLabel = parsed.answer.trim().parse().map_err(|e: Error| schema(e.to_string()))?;
        let mut item = VqaItem {
            id: parsed.id,
            image: None,
            question: parsed.question,
            options,
            gold: Some(gold),
            modality: parsed.modality,
        };
        item.validate().map_err(|e| schema(e.to_string()))?;
        if !ids.insert(item.id.clone()) {
            return Err(schema(format!("duplicate item id `{}`", item.id)));
        }
        if let Some(rel) = parsed.image {
            let full = root.join(&rel);
            let bytes = std::fs::read(&full)
                .map_err(|_| Error::MissingImage { item_id: item.id.clone(), path: full.clone() })?;
            item.image = Some(ImageData::new(ImageData::media_type_for(&full), bytes));
        }
        items.push(item);
    }
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(Dataset { name, items, image_root: Some(root) })
}
