use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// The endpoint kept failing after every retry (or the in-process script injected a fault).
    #[error("agent `{agent_id}` unavailable after {attempts} attempt(s): {reason}")]
    AgentUnavailable {
        agent_id: String,
        attempts: u32,
        reason: String,
    },

    #[error("protocol error from agent `{agent_id}`: {reason}")]
    Protocol { agent_id: String, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("mediator decision unparseable: {0}")]
    DecisionUnparseable(String),

    #[error("template `{template}` is missing placeholder `{name}`")]
    MissingPlaceholder { template: String, name: String },

    #[error("unknown template `{0}`")]
    UnknownTemplate(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid item: {0}")]
    InvalidItem(String),

    #[error("schema error at line {line}: {message}")]
    Schema { line: usize, message: String },

    #[error("item `{item_id}` references missing image {path}")]
    MissingImage { item_id: String, path: PathBuf },

    #[error("failed to bind mock server on {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}
