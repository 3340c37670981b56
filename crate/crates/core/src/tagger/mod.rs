//! Tagging interface shared by the built-in tagger and external processes.
//!
//! External taggers speak newline-delimited JSON over their standard streams.
//! The engine opens with `{"op":"ping"}` and expects `{"op":"pong"}`, then
//! sends one request per line:
//!
//! ```text
//! {"id":"doc/3/1,3","tokens":["He","left","Elantris","."],"target_start":2,"target_end":4}
//! ```
//!
//! and reads one response per line, covering every request token:
//!
//! ```text
//! {"id":"doc/3/1,3","tags":["O","O","B-LOC","O"]}
//! ```

mod memorizing;
mod process;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Document;
use crate::retrieval::{self, ContextualExample, RetrievalError};
use crate::tags::BioTag;

pub use memorizing::{train_memorizing, MemorizingTagger, TypeCounts};
pub use process::{serve, ProcessTagger, DEFAULT_TIMEOUT};

#[derive(Debug, Error)]
pub enum TaggerError {
    #[error("failed to start tagger `{command}`: {source}")]
    Spawn {
        command: String,
        #[source]
        source: std::io::Error,
    },
    #[error("tagger command is empty or cannot be parsed: `{0}`")]
    BadCommand(String),
    #[error("tagger process exited")]
    Exited,
    #[error("tagger did not answer within {0:?}")]
    Timeout(std::time::Duration),
    #[error("tagger i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error(transparent)]
    Context(#[from] RetrievalError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagRequest {
    pub id: String,
    pub tokens: Vec<String>,
    pub target_start: usize,
    pub target_end: usize,
}

impl TagRequest {
    pub fn from_example(example: &ContextualExample) -> Self {
        let (target_start, target_end) = example.target_span();
        let joined: Vec<String> = example.sentence_indices.iter().map(usize::to_string).collect();
        TagRequest {
            id: format!("{}/{}/{}", example.doc_id, example.target_index, joined.join(",")),
            tokens: example.tokens.clone(),
            target_start,
            target_end,
        }
    }

    pub fn validate(&self) -> Result<(), TaggerError> {
        if self.target_start < self.target_end && self.target_end <= self.tokens.len() {
            Ok(())
        } else {
            Err(TaggerError::Protocol(format!(
                "request {}: target span {}..{} invalid for {} tokens",
                self.id,
                self.target_start,
                self.target_end,
                self.tokens.len()
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagResponse {
    pub id: String,
    pub tags: Vec<BioTag>,
}

impl TagResponse {
    /// Checks the response answers `request` in full.
    pub fn check_against(&self, request: &TagRequest) -> Result<(), TaggerError> {
        if self.id != request.id {
            return Err(TaggerError::Protocol(format!(
                "response id `{}` does not match request id `{}`",
                self.id, request.id
            )));
        }
        if self.tags.len() != request.tokens.len() {
            return Err(TaggerError::Protocol(format!(
                "response `{}` has {} tags for {} tokens",
                self.id,
                self.tags.len(),
                request.tokens.len()
            )));
        }
        Ok(())
    }
}

pub trait Tagger {
    fn tag(&mut self, request: &TagRequest) -> Result<TagResponse, TaggerError>;
}

impl<T: Tagger + ?Sized> Tagger for &mut T {
    fn tag(&mut self, request: &TagRequest) -> Result<TagResponse, TaggerError> {
        (**self).tag(request)
    }
}

impl<T: Tagger + ?Sized> Tagger for Box<T> {
    fn tag(&mut self, request: &TagRequest) -> Result<TagResponse, TaggerError> {
        (**self).tag(request)
    }
}

/// Tags sentence `target` of `doc` with the given context sentences attached
/// and returns the tags of the target sentence only.
pub fn tag_with_context<T: Tagger + ?Sized>(
    tagger: &mut T,
    doc: &Document,
    target: usize,
    retrieved: &[usize],
) -> Result<Vec<BioTag>, TaggerError> {
    let example = retrieval::context::assemble_indices(doc, target, retrieved.iter().copied())?;
    let request = TagRequest::from_example(&example);
    let response = tagger.tag(&request)?;
    response.check_against(&request)?;
    Ok(response.tags[request.target_start..request.target_end].to_vec())
}
