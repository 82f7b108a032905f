//! Request and error types shared by every generation/embedding backend.

use alloc::string::String;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// What a generation request is for. Live backends only see the rendered
/// prompt; the tag lets offline generators answer without parsing it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "kebab-case")]
pub enum Task {
    IdealSentences { count: usize, topic: String },
    NoisyVariant { sentence: String },
    Aggregate {
        option: u8,
        count: usize,
        sentence_a: String,
        sentence_b: String,
    },
    RandomSentence,
}

/// One chat-style generation request: a system message plus a user prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system: String,
    pub prompt: String,
    pub model: String,
    pub temperature: f64,
    pub word_limit: usize,
    pub task: Task,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderErrorKind {
    Transport,
    Timeout,
    Auth,
    /// The backend refused the request for a reason retrying won't fix.
    Rejected,
    Malformed,
    Dimension,
    ReplayMiss,
    Exhausted,
    Parse,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{kind:?} provider error: {message}")]
pub struct ProviderError {
    pub kind: ProviderErrorKind,
    pub message: String,
}

impl ProviderError {
    pub fn new(kind: ProviderErrorKind, message: impl Into<String>) -> Self {
        ProviderError {
            kind,
            message: message.into(),
        }
    }

    /// Transport hiccups and timeouts are worth retrying; the rest are not.
    pub fn is_transient(&self) -> bool {
        matches!(
            self.kind,
            ProviderErrorKind::Transport | ProviderErrorKind::Timeout
        )
    }
}
