//! The judged text: a review comment produced by an LLM for a code diff.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Optional file/line position a comment is attached to. Judging does not
/// use it; it is carried for callers that track where comments land.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommentAnchor {
    pub path: String,
    pub line: u64,
}

/// An LLM-generated review comment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewComment {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<CommentAnchor>,
    /// Identifier of the model that generated the comment, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CommentError {
    #[error("review comment text is empty")]
    EmptyText,
}

impl ReviewComment {
    /// Build a comment, rejecting text that is empty after trimming.
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Result<Self, CommentError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(CommentError::EmptyText);
        }
        Ok(ReviewComment {
            id: id.into(),
            text,
            anchor: None,
            generator: None,
        })
    }

    pub fn with_generator(mut self, generator: impl Into<String>) -> Self {
        self.generator = Some(generator.into());
        self
    }
}
