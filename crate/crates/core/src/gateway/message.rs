use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::item::ImageData;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sender {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ContentPart {
    Text(String),
    Image(ImageData),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatMessage {
    pub sender: Sender,
    pub parts: Vec<ContentPart>,
}

impl ChatMessage {
    pub fn system(text: impl Into<String>) -> Self {
        Self { sender: Sender::System, parts: vec![ContentPart::Text(text.into())] }
    }

    pub fn user(text: impl Into<String>) -> Self {
        Self { sender: Sender::User, parts: vec![ContentPart::Text(text.into())] }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Self { sender: Sender::Assistant, parts: vec![ContentPart::Text(text.into())] }
    }

    /// Text first, then the image, in one user message.
    pub fn user_with_image(text: impl Into<String>, image: &ImageData) -> Self {
        Self {
            sender: Sender::User,
            parts: vec![ContentPart::Text(text.into()), ContentPart::Image(image.clone())],
        }
    }

    pub fn has_image(&self) -> bool {
        self.parts.iter().any(|p| matches!(p, ContentPart::Image(_)))
    }

    /// Concatenated text parts.
    pub fn text(&self) -> String {
        self.parts
            .iter()
            .filter_map(|p| match p {
                ContentPart::Text(t) => Some(t.as_str()),
                ContentPart::Image(_) => None,
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Wire form. Single-text messages use a plain string `content`,
    /// anything with an image uses the content-part array.
    pub fn to_wire(&self) -> Value {
        let content = match self.parts.as_slice() {
            [ContentPart::Text(t)] => Value::String(t.clone()),
            parts => Value::Array(
                parts
                    .iter()
                    .map(|p| match p {
                        ContentPart::Text(t) => json!({"type": "text", "text": t}),
                        ContentPart::Image(img) => {
                            json!({"type": "image_url", "image_url": {"url": img.data_url()}})
                        }
                    })
                    .collect(),
            ),
        };
        json!({"role": self.sender, "content": content})
    }
}
