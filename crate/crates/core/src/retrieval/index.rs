use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::nouns::NounDetector;
use crate::corpus::{Document, Sentence};

/// Okapi BM25 parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    /// Term-frequency saturation.
    pub k1: f64,
    /// Length normalization, in `[0, 1]`.
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.5, b: 0.75 }
    }
}

/// Lowercases a token; punctuation-only tokens produce no term.
pub fn normalize_term(token: &str) -> Option<String> {
    if token.chars().any(char::is_alphanumeric) {
        Some(token.to_lowercase())
    } else {
        None
    }
}

pub fn sentence_terms(sentence: &Sentence) -> Vec<String> {
    sentence.texts().filter_map(normalize_term).collect()
}

/// Per-document statistics for the content-based heuristics. Immutable once
/// built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceIndex {
    pub doc_id: String,
    pub term_frequencies: Vec<BTreeMap<String, u32>>,
    pub document_frequencies: BTreeMap<String, usize>,
    pub sentence_lengths: Vec<usize>,
    pub avg_sentence_length: f64,
    pub noun_sets: Vec<BTreeSet<String>>,
    pub params: Bm25Params,
}

impl SentenceIndex {
    pub fn build(doc: &Document, detector: &dyn NounDetector, params: Bm25Params) -> Self {
        let mut term_frequencies = Vec::with_capacity(doc.len());
        let mut document_frequencies: BTreeMap<String, usize> = BTreeMap::new();
        let mut sentence_lengths = Vec::with_capacity(doc.len());
        for sentence in &doc.sentences {
            let terms = sentence_terms(sentence);
            sentence_lengths.push(terms.len());
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for term in terms {
                *tf.entry(term).or_default() += 1;
            }
            for term in tf.keys() {
                *document_frequencies.entry(term.clone()).or_default() += 1;
            }
            term_frequencies.push(tf);
        }
        let avg_sentence_length = if sentence_lengths.is_empty() {
            0.0
        } else {
            sentence_lengths.iter().sum::<usize>() as f64 / sentence_lengths.len() as f64
        };
        SentenceIndex {
            doc_id: doc.id.clone(),
            term_frequencies,
            document_frequencies,
            sentence_lengths,
            avg_sentence_length,
            noun_sets: doc.sentences.iter().map(|s| detector.detect(s)).collect(),
            params,
        }
    }

    pub fn len(&self) -> usize {
        self.sentence_lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentence_lengths.is_empty()
    }

    /// Non-negative IDF: `ln(1 + (N - n + 0.5) / (n + 0.5))`.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.document_frequencies.get(term).copied().unwrap_or(0) as f64;
        let total = self.len() as f64;
        (1.0 + (total - n + 0.5) / (n + 0.5)).ln()
    }

    /// BM25 relevance of sentence `candidate` to sentence `query` under the
    /// index's own parameters.
    pub fn bm25(&self, query: usize, candidate: usize) -> f64 {
        bm25_score(self, query, candidate, self.params)
    }
}

pub fn build_index(doc: &Document, detector: &dyn NounDetector, params: Bm25Params) -> SentenceIndex {
    SentenceIndex::build(doc, detector, params)
}

/// Sums, over the distinct terms of the query sentence, the IDF times the
/// saturated, length-normalized frequency of that term in the candidate.
pub fn bm25_score(index: &SentenceIndex, query: usize, candidate: usize, params: Bm25Params) -> f64 {
    let doc_terms = &index.term_frequencies[candidate];
    let len = index.sentence_lengths[candidate] as f64;
    let norm = if index.avg_sentence_length > 0.0 {
        1.0 - params.b + params.b * len / index.avg_sentence_length
    } else {
        1.0
    };
    index.term_frequencies[query]
        .keys()
        .filter_map(|term| {
            let tf = f64::from(*doc_terms.get(term)?);
            Some(index.idf(term) * tf * (params.k1 + 1.0) / (tf + params.k1 * norm))
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Token;
    use crate::retrieval::nouns::LexiconNounDetector;
    use crate::tags::BioTag;
    use approx::assert_abs_diff_eq;

    fn doc(sentences: &[&str]) -> Document {
        Document::from_sentences(
            "d",
            sentences
                .iter()
                .map(|s| s.split_whitespace().map(|t| Token::new(t, BioTag::O)).collect())
                .collect(),
        )
    }

    fn index(sentences: &[&str], params: Bm25Params) -> SentenceIndex {
        build_index(&doc(sentences), &LexiconNounDetector::default(), params)
    }

    #[test]
    fn single_sentence_average() {
        let idx = index(&["the cat sat ."], Bm25Params::default());
        assert_eq!(idx.sentence_lengths, vec![3]);
        assert_eq!(idx.avg_sentence_length, 3.0);
    }

    #[test]
    fn identical_sentences_share_statistics() {
        let idx = index(&["a b b", "a b b"], Bm25Params::default());
        assert_eq!(idx.term_frequencies[0], idx.term_frequencies[1]);
        assert!(idx.document_frequencies.values().all(|&n| n == 2));
    }

    #[test]
    fn normalization_lowercases_and_drops_punctuation() {
        assert_eq!(normalize_term("Castle"), Some("castle".into()));
        assert_eq!(normalize_term("--"), None);
        assert_eq!(normalize_term("x-ray"), Some("x-ray".into()));
    }

    #[test]
    fn no_shared_terms_scores_zero() {
        let idx = index(&["alpha beta", "gamma delta"], Bm25Params::default());
        assert_eq!(idx.bm25(0, 1), 0.0);
    }

    #[test]
    fn hand_evaluated_toy_corpus() {
        // N = 3, "fox" occurs in sentences 0 and 2 (n = 2).
        // avg length = (2 + 2 + 3) / 3 = 7/3; candidate 2 has length 3, tf 1.
        let idx = index(&["red fox", "blue bird", "the fox ran"], Bm25Params::default());
        let idf = (1.0f64 + (3.0 - 2.0 + 0.5) / (2.0 + 0.5)).ln();
        let norm = 1.0 - 0.75 + 0.75 * 3.0 / (7.0 / 3.0);
        let expected = idf * 1.0 * 2.5 / (1.0 + 1.5 * norm);
        assert_abs_diff_eq!(idx.bm25(0, 2), expected, epsilon = 1e-9);
        assert_abs_diff_eq!(expected, 0.416_458_911_99, epsilon = 1e-9);
    }

    #[test]
    fn b_zero_ignores_candidate_length() {
        let params = Bm25Params { k1: 1.2, b: 0.0 };
        let idx = index(&["fox", "fox", "fox and many other words here"], params);
        assert_abs_diff_eq!(idx.bm25(0, 1), idx.bm25(0, 2), epsilon = 1e-12);
    }
}
