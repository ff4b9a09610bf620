//! Multiple-choice VQA items.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use base64::Engine;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A single uppercase option letter (`A`, `B`, ...).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OptionLabel(char);

impl OptionLabel {
    pub fn new(c: char) -> Result<Self> {
        if c.is_ascii_uppercase() {
            Ok(Self(c))
        } else {
            Err(Error::InvalidItem(format!("option label `{c}` is not an uppercase letter")))
        }
    }

    /// The label at zero-based position `index` (`0 -> A`).
    pub fn from_index(index: usize) -> Option<Self> {
        (index < 26).then(|| Self((b'A' + index as u8) as char))
    }

    pub fn index(self) -> usize {
        (self.0 as u8 - b'A') as usize
    }

    pub fn as_char(self) -> char {
        self.0
    }
}

impl fmt::Display for OptionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for OptionLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut chars = s.trim().chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => Self::new(c),
            _ => Err(Error::InvalidItem(format!("`{s}` is not a single option label"))),
        }
    }
}

impl Serialize for OptionLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for OptionLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerOption {
    pub label: OptionLabel,
    pub text: String,
}

impl AnswerOption {
    pub fn new(label: char, text: impl Into<String>) -> Result<Self> {
        Ok(Self { label: OptionLabel::new(label)?, text: text.into() })
    }

    /// `"A) text"`, the candidate string used for similarity matching.
    pub fn candidate(&self) -> String {
        format!("{}) {}", self.label, self.text)
    }
}

/// Binary image payload; serialized as base64.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageData {
    pub media_type: String,
    #[serde(with = "base64_bytes")]
    pub bytes: Vec<u8>,
}

impl ImageData {
    pub fn new(media_type: impl Into<String>, bytes: Vec<u8>) -> Self {
        Self { media_type: media_type.into(), bytes }
    }

    pub fn data_url(&self) -> String {
        format!(
            "data:{};base64,{}",
            self.media_type,
            base64::engine::general_purpose::STANDARD.encode(&self.bytes)
        )
    }

    /// Guesses the media type from a file extension.
    pub fn media_type_for(path: &std::path::Path) -> &'static str {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref()
        {
            Some("jpg") | Some("jpeg") => "image/jpeg",
            Some("gif") => "image/gif",
            Some("webp") => "image/webp",
            Some("bmp") => "image/bmp",
            Some("tif") | Some("tiff") => "image/tiff",
            _ => "image/png",
        }
    }
}

impl fmt::Debug for ImageData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ImageData")
            .field("media_type", &self.media_type)
            .field("len", &self.bytes.len())
            .finish()
    }
}

mod base64_bytes {
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&base64::engine::general_purpose::STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        base64::engine::general_purpose::STANDARD
            .decode(s.as_bytes())
            .map_err(serde::de::Error::custom)
    }
}

/// One multiple-choice question, optionally with an image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqaItem {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<ImageData>,
    pub question: String,
    pub options: Vec<AnswerOption>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<OptionLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modality: Option<String>,
}

impl VqaItem {
    /// Builds an item from option texts, labelling them `A`, `B`, ... in order.
    pub fn new<S: Into<String>>(
        id: impl Into<String>,
        question: impl Into<String>,
        options: impl IntoIterator<Item = S>,
    ) -> Result<Self> {
        let options = options
            .into_iter()
            .enumerate()
            .map(|(i, text)| {
                let label = OptionLabel::from_index(i)
                    .ok_or_else(|| Error::InvalidItem("more than 26 options".into()))?;
                Ok(AnswerOption { label, text: text.into() })
            })
            .collect::<Result<Vec<_>>>()?;
        let item = Self {
            id: id.into(),
            image: None,
            question: question.into(),
            options,
            gold: None,
            modality: None,
        };
        item.validate()?;
        Ok(item)
    }

    pub fn with_gold(mut self, gold: char) -> Result<Self> {
        self.gold = Some(OptionLabel::new(gold)?);
        self.validate()?;
        Ok(self)
    }

    pub fn with_image(mut self, image: ImageData) -> Self {
        self.image = Some(image);
        self
    }

    pub fn with_modality(mut self, modality: impl Into<String>) -> Self {
        self.modality = Some(modality.into());
        self
    }

    /// Checks label uniqueness/contiguity, option count and gold membership.
    pub fn validate(&self) -> Result<()> {
        if self.id.trim().is_empty() {
            return Err(Error::InvalidItem("empty item id".into()));
        }
        if self.options.len() < 2 {
            return Err(Error::InvalidItem(format!(
                "item `{}` has {} option(s), need at least 2",
                self.id,
                self.options.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for opt in &self.options {
            if !seen.insert(opt.label) {
                return Err(Error::InvalidItem(format!(
                    "item `{}` has duplicate option label {}",
                    self.id, opt.label
                )));
            }
        }
        for (i, label) in seen.iter().enumerate() {
            if label.index() != i {
                return Err(Error::InvalidItem(format!(
                    "item `{}` option labels are not contiguous from A",
                    self.id
                )));
            }
        }
        if let Some(gold) = self.gold {
            if !seen.contains(&gold) {
                return Err(Error::InvalidItem(format!(
                    "item `{}` gold label {gold} is not an option",
                    self.id
                )));
            }
        }
        Ok(())
    }

    pub fn labels(&self) -> Vec<OptionLabel> {
        self.options.iter().map(|o| o.label).collect()
    }

    pub fn option(&self, label: OptionLabel) -> Option<&AnswerOption> {
        self.options.iter().find(|o| o.label == label)
    }

    /// Question text followed by one `(X): text` line per option.
    pub fn question_block(&self) -> String {
        let mut out = self.question.trim_end().to_string();
        for opt in &self.options {
            out.push_str(&format!("\n({}): {}", opt.label, opt.text));
        }
        out
    }
}
