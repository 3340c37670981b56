//! Context sentence retrieval within one document.
//!
//! Three positional heuristics (`before`, `after`, `surrounding`) only look at
//! the target's neighbours; three content heuristics (`random`, `samenoun`,
//! `bm25`) may pick any other sentence of the document and need a
//! [`SentenceIndex`].

pub(crate) mod context;
mod index;
mod nouns;

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Document;

pub use context::{assemble_context, ContextualExample};
pub use index::{bm25_score, build_index, normalize_term, sentence_terms, Bm25Params, SentenceIndex};
pub use nouns::{detect_nouns, LexiconNounDetector, NounDetector};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RetrievalError {
    #[error("sentence {index} out of range for document `{doc_id}` of {len} sentences")]
    OutOfRange {
        doc_id: String,
        index: usize,
        len: usize,
    },
    #[error("retrieval count must be at least 1")]
    ZeroCount,
    #[error("unknown heuristic `{0}`")]
    UnknownHeuristic(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Heuristic {
    Before,
    After,
    Surrounding,
    Random,
    #[serde(rename = "samenoun")]
    SameNoun,
    Bm25,
}

impl Heuristic {
    pub const ALL: [Heuristic; 6] = [
        Heuristic::Before,
        Heuristic::After,
        Heuristic::Surrounding,
        Heuristic::Random,
        Heuristic::SameNoun,
        Heuristic::Bm25,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Heuristic::Before => "before",
            Heuristic::After => "after",
            Heuristic::Surrounding => "surrounding",
            Heuristic::Random => "random",
            Heuristic::SameNoun => "samenoun",
            Heuristic::Bm25 => "bm25",
        }
    }

    /// Local heuristics only ever return neighbouring sentences.
    pub fn is_local(self) -> bool {
        matches!(self, Heuristic::Before | Heuristic::After | Heuristic::Surrounding)
    }
}

impl fmt::Display for Heuristic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Heuristic {
    type Err = RetrievalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Heuristic::ALL
            .into_iter()
            .find(|h| h.as_str() == s)
            .ok_or_else(|| RetrievalError::UnknownHeuristic(s.to_string()))
    }
}

/// A retrieved sentence. `distance` is the candidate's index minus the
/// target's, never zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub sentence_index: usize,
    pub score: f64,
    pub distance: i64,
}

impl RankedCandidate {
    pub fn new(target: usize, sentence_index: usize, score: f64) -> Self {
        debug_assert_ne!(target, sentence_index);
        RankedCandidate {
            sentence_index,
            score,
            distance: sentence_index as i64 - target as i64,
        }
    }
}

/// Orders by score descending, then proximity, then index.
pub fn rank_order(a: &RankedCandidate, b: &RankedCandidate) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.distance.unsigned_abs().cmp(&b.distance.unsigned_abs()))
        .then(a.sentence_index.cmp(&b.sentence_index))
}

fn check(doc_id: &str, len: usize, target: usize, k: usize) -> Result<(), RetrievalError> {
    if target >= len {
        return Err(RetrievalError::OutOfRange {
            doc_id: doc_id.to_string(),
            index: target,
            len,
        });
    }
    if k == 0 {
        return Err(RetrievalError::ZeroCount);
    }
    Ok(())
}

fn positional(target: usize, indices: impl IntoIterator<Item = usize>) -> Vec<RankedCandidate> {
    indices
        .into_iter()
        .map(|j| RankedCandidate::new(target, j, 0.0))
        .collect()
}

fn window_before(target: usize, k: usize) -> std::ops::Range<usize> {
    target.saturating_sub(k)..target
}

fn window_after(len: usize, target: usize, k: usize) -> std::ops::Range<usize> {
    target + 1..(target + 1 + k).min(len)
}

/// The `k` sentences immediately left of `target`.
pub fn retrieve_before(doc: &Document, target: usize, k: usize) -> Result<Vec<RankedCandidate>, RetrievalError> {
    check(&doc.id, doc.len(), target, k)?;
    Ok(positional(target, window_before(target, k)))
}

/// The `k` sentences immediately right of `target`.
pub fn retrieve_after(doc: &Document, target: usize, k: usize) -> Result<Vec<RankedCandidate>, RetrievalError> {
    check(&doc.id, doc.len(), target, k)?;
    Ok(positional(target, window_after(doc.len(), target, k)))
}

/// `floor(k / 2)` sentences on each side. A side cut short by the document
/// boundary is not compensated on the other side.
pub fn retrieve_surrounding(doc: &Document, target: usize, k: usize) -> Result<Vec<RankedCandidate>, RetrievalError> {
    check(&doc.id, doc.len(), target, k)?;
    let half = k / 2;
    Ok(positional(
        target,
        window_before(target, half).chain(window_after(doc.len(), target, half)),
    ))
}

fn sample<R: Rng + ?Sized>(
    target: usize,
    pool: Vec<(usize, f64)>,
    k: usize,
    rng: &mut R,
) -> Vec<RankedCandidate> {
    let picked = if pool.len() <= k {
        pool
    } else {
        let mut chosen: Vec<(usize, f64)> = rand::seq::index::sample(rng, pool.len(), k)
            .into_iter()
            .map(|p| pool[p])
            .collect();
        chosen.sort_by_key(|&(j, _)| j);
        chosen
    };
    picked
        .into_iter()
        .map(|(j, score)| RankedCandidate::new(target, j, score))
        .collect()
}

/// Keeps sentence `j` as a candidate for `target` under an exclusion radius.
fn admissible(target: usize, j: usize, exclusion_radius: usize) -> bool {
    j != target && j.abs_diff(target) > exclusion_radius
}

/// `k` sentences drawn uniformly without replacement from the rest of the
/// document.
pub fn retrieve_random<R: Rng + ?Sized>(
    doc: &Document,
    target: usize,
    k: usize,
    rng: &mut R,
) -> Result<Vec<RankedCandidate>, RetrievalError> {
    check(&doc.id, doc.len(), target, k)?;
    Ok(random_from(doc.len(), target, k, 0, rng))
}

fn random_from<R: Rng + ?Sized>(
    len: usize,
    target: usize,
    k: usize,
    exclusion_radius: usize,
    rng: &mut R,
) -> Vec<RankedCandidate> {
    let pool = (0..len)
        .filter(|&j| admissible(target, j, exclusion_radius))
        .map(|j| (j, 0.0))
        .collect();
    sample(target, pool, k, rng)
}

/// `k` sentences drawn uniformly without replacement among those sharing at
/// least one noun with the target. Scores are the number of shared nouns.
pub fn retrieve_samenoun<R: Rng + ?Sized>(
    index: &SentenceIndex,
    target: usize,
    k: usize,
    rng: &mut R,
) -> Result<Vec<RankedCandidate>, RetrievalError> {
    check(&index.doc_id, index.len(), target, k)?;
    Ok(samenoun_from(index, target, k, 0, rng))
}

fn samenoun_from<R: Rng + ?Sized>(
    index: &SentenceIndex,
    target: usize,
    k: usize,
    exclusion_radius: usize,
    rng: &mut R,
) -> Vec<RankedCandidate> {
    let nouns = &index.noun_sets[target];
    let pool = index
        .noun_sets
        .iter()
        .enumerate()
        .filter(|&(j, _)| admissible(target, j, exclusion_radius))
        .filter_map(|(j, other)| {
            let shared = nouns.intersection(other).count();
            (shared > 0).then_some((j, shared as f64))
        })
        .collect();
    sample(target, pool, k, rng)
}

/// The `k` best-scoring sentences by BM25 against the target. Sentences that
/// score 0 are never returned.
pub fn retrieve_bm25(index: &SentenceIndex, target: usize, k: usize) -> Result<Vec<RankedCandidate>, RetrievalError> {
    check(&index.doc_id, index.len(), target, k)?;
    Ok(bm25_from(index, target, k, 0))
}

fn bm25_from(index: &SentenceIndex, target: usize, k: usize, exclusion_radius: usize) -> Vec<RankedCandidate> {
    let mut scored: Vec<RankedCandidate> = (0..index.len())
        .filter(|&j| admissible(target, j, exclusion_radius))
        .filter_map(|j| {
            let score = index.bm25(target, j);
            (score > 0.0).then(|| RankedCandidate::new(target, j, score))
        })
        .collect();
    scored.sort_by(rank_order);
    scored.truncate(k);
    scored
}

/// Runs any heuristic. With a non-zero `exclusion_radius`, sentences within
/// that distance of the target are removed from the candidate pool before
/// selection (positional heuristics simply lose them).
pub fn retrieve<R: Rng + ?Sized>(
    index: &SentenceIndex,
    heuristic: Heuristic,
    target: usize,
    k: usize,
    exclusion_radius: usize,
    rng: &mut R,
) -> Result<Vec<RankedCandidate>, RetrievalError> {
    let len = index.len();
    check(&index.doc_id, len, target, k)?;
    let mut found = match heuristic {
        Heuristic::Before => positional(target, window_before(target, k)),
        Heuristic::After => positional(target, window_after(len, target, k)),
        Heuristic::Surrounding => positional(
            target,
            window_before(target, k / 2).chain(window_after(len, target, k / 2)),
        ),
        Heuristic::Random => return Ok(random_from(len, target, k, exclusion_radius, rng)),
        Heuristic::SameNoun => return Ok(samenoun_from(index, target, k, exclusion_radius, rng)),
        Heuristic::Bm25 => return Ok(bm25_from(index, target, k, exclusion_radius)),
    };
    found.retain(|c| admissible(target, c.sentence_index, exclusion_radius));
    Ok(found)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Token;
    use crate::tags::BioTag;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn doc(sentences: &[&str]) -> Document {
        Document::from_sentences(
            "d",
            sentences
                .iter()
                .map(|s| s.split_whitespace().map(|t| Token::new(t, BioTag::O)).collect())
                .collect(),
        )
    }

    fn blank(n: usize) -> Document {
        doc(&vec!["x"; n])
    }

    fn indices(found: &[RankedCandidate]) -> Vec<usize> {
        let mut v: Vec<usize> = found.iter().map(|c| c.sentence_index).collect();
        v.sort_unstable();
        v
    }

    #[test]
    fn before_window() {
        let d = blank(10);
        assert_eq!(indices(&retrieve_before(&d, 5, 2).unwrap()), vec![3, 4]);
        assert!(retrieve_before(&d, 0, 3).unwrap().is_empty());
        assert_eq!(indices(&retrieve_before(&d, 1, 4).unwrap()), vec![0]);
        assert_eq!(retrieve_before(&d, 5, 2).unwrap()[0].distance, -2);
    }

    #[test]
    fn after_window() {
        let d = blank(10);
        assert_eq!(indices(&retrieve_after(&d, 5, 2).unwrap()), vec![6, 7]);
        assert!(retrieve_after(&d, 9, 2).unwrap().is_empty());
        assert_eq!(indices(&retrieve_after(&d, 8, 4).unwrap()), vec![9]);
    }

    #[test]
    fn surrounding_window() {
        let d = blank(10);
        assert_eq!(indices(&retrieve_surrounding(&d, 5, 2).unwrap()), vec![4, 6]);
        assert_eq!(indices(&retrieve_surrounding(&d, 0, 4).unwrap()), vec![1, 2]);
        assert!(retrieve_surrounding(&d, 5, 1).unwrap().is_empty());
    }

    #[test]
    fn out_of_range_and_zero_k() {
        let d = blank(3);
        assert!(matches!(
            retrieve_before(&d, 3, 1),
            Err(RetrievalError::OutOfRange { index: 3, len: 3, .. })
        ));
        assert_eq!(retrieve_after(&d, 0, 0), Err(RetrievalError::ZeroCount));
    }

    #[test]
    fn random_excludes_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(indices(&retrieve_random(&blank(2), 0, 1, &mut rng).unwrap()), vec![1]);
        assert_eq!(
            indices(&retrieve_random(&blank(5), 2, 10, &mut rng).unwrap()),
            vec![0, 1, 3, 4]
        );
        let a = retrieve_random(&blank(50), 7, 5, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = retrieve_random(&blank(50), 7, 5, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 5);
    }

    fn index_of(d: &Document) -> SentenceIndex {
        build_index(d, &LexiconNounDetector::default(), Bm25Params::default())
    }

    #[test]
    fn samenoun_finds_the_shared_name() {
        let d = doc(&[
            "his eyes fell on Elantris again",
            "it was late",
            "they walked into Elantris",
        ]);
        let idx = index_of(&d);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let found = retrieve_samenoun(&idx, 0, 1, &mut rng).unwrap();
        // "eyes" is a lexicon noun too, but only sentence 2 shares anything.
        assert_eq!(indices(&found), vec![2]);
    }

    #[test]
    fn samenoun_without_nouns_is_empty() {
        let d = doc(&["it was late", "it was late", "Kelsier smiled"]);
        let idx = index_of(&d);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(retrieve_samenoun(&idx, 0, 3, &mut rng).unwrap().is_empty());
    }

    #[test]
    fn samenoun_returns_whole_small_pool() {
        let d = doc(&["Vin ran", "Vin sat", "Vin slept", "nothing here"]);
        let idx = index_of(&d);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(indices(&retrieve_samenoun(&idx, 0, 5, &mut rng).unwrap()), vec![1, 2]);
    }

    #[test]
    fn bm25_prefers_duplicates_and_skips_zero_scores() {
        let d = doc(&["red fox jumps", "blue bird", "red fox jumps", "fox"]);
        let idx = index_of(&d);
        let found = retrieve_bm25(&idx, 0, 3).unwrap();
        assert_eq!(found[0].sentence_index, 2);
        assert_eq!(indices(&found), vec![2, 3]);

        let d = doc(&["alpha", "beta", "gamma"]);
        assert!(retrieve_bm25(&index_of(&d), 0, 2).unwrap().is_empty());
    }

    #[test]
    fn bm25_ties_break_by_proximity_then_index() {
        let d = doc(&["fox", "fox", "x", "fox", "fox"]);
        let found = retrieve_bm25(&index_of(&d), 2, 4);
        // sentence 2 shares nothing with the others.
        assert!(found.unwrap().is_empty());
        let found = retrieve_bm25(&index_of(&d), 1, 3).unwrap();
        assert_eq!(
            found.iter().map(|c| c.sentence_index).collect::<Vec<_>>(),
            vec![0, 3, 4]
        );
    }

    #[test]
    fn exclusion_radius_removes_neighbours_before_selection() {
        let d = doc(&vec!["fox"; 20]);
        let idx = index_of(&d);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for h in Heuristic::ALL {
            let found = retrieve(&idx, h, 10, 16, 6, &mut rng).unwrap();
            assert!(found.iter().all(|c| c.distance.unsigned_abs() > 6), "{h}");
        }
        let bm25 = retrieve(&idx, Heuristic::Bm25, 10, 4, 6, &mut rng).unwrap();
        // All scores tie, so the closest admissible sentences win.
        assert_eq!(
            bm25.iter().map(|c| c.sentence_index).collect::<Vec<_>>(),
            vec![3, 17, 2, 18]
        );
    }

    #[test]
    fn heuristic_names_round_trip() {
        for h in Heuristic::ALL {
            assert_eq!(h.as_str().parse::<Heuristic>().unwrap(), h);
        }
        assert!("nearest".parse::<Heuristic>().is_err());
    }
}
