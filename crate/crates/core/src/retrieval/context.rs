use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{RankedCandidate, RetrievalError};
use crate::corpus::Document;

/// A target sentence with its context, flattened in document order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextualExample {
    pub doc_id: String,
    pub target_index: usize,
    /// Strictly increasing, includes `target_index`.
    pub sentence_indices: Vec<usize>,
    pub tokens: Vec<String>,
    /// True exactly over the target sentence's tokens.
    pub target_mask: Vec<bool>,
}

impl ContextualExample {
    /// Half-open token range of the target sentence within `tokens`.
    pub fn target_span(&self) -> (usize, usize) {
        let start = self.target_mask.iter().position(|&m| m).unwrap_or(0);
        let len = self.target_mask.iter().filter(|&&m| m).count();
        (start, start + len)
    }
}

/// Concatenates the target and the retrieved sentences, preserving document
/// order. Duplicate candidates collapse.
pub fn assemble_context(
    doc: &Document,
    target: usize,
    retrieved: &[RankedCandidate],
) -> Result<ContextualExample, RetrievalError> {
    assemble_indices(doc, target, retrieved.iter().map(|c| c.sentence_index))
}

pub(crate) fn assemble_indices(
    doc: &Document,
    target: usize,
    retrieved: impl IntoIterator<Item = usize>,
) -> Result<ContextualExample, RetrievalError> {
    let out_of_range = |index| RetrievalError::OutOfRange {
        doc_id: doc.id.clone(),
        index,
        len: doc.len(),
    };
    if target >= doc.len() {
        return Err(out_of_range(target));
    }
    let mut selected = BTreeSet::from([target]);
    for j in retrieved {
        if j >= doc.len() {
            return Err(out_of_range(j));
        }
        selected.insert(j);
    }
    let mut tokens = Vec::new();
    let mut target_mask = Vec::new();
    for &j in &selected {
        for token in &doc.sentences[j].tokens {
            tokens.push(token.text.clone());
            target_mask.push(j == target);
        }
    }
    Ok(ContextualExample {
        doc_id: doc.id.clone(),
        target_index: target,
        sentence_indices: selected.into_iter().collect(),
        tokens,
        target_mask,
    })
}
