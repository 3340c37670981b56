//! Oracle re-ranking: keep the candidate context sentences that most reduce
//! the tagger's errors on the target sentence.
//!
//! Each candidate is scored on its own. The error delta is the number of
//! token-level tag errors on the target without context minus the number with
//! that one candidate attached; positive deltas help.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Document;
use crate::metrics::{token_error_count, MetricsError};
use crate::retrieval::{retrieve, Heuristic, RankedCandidate, RetrievalError, SentenceIndex};
use crate::tagger::{tag_with_context, Tagger, TaggerError};
use crate::tags::BioTag;

/// Distance up to which retrieved context counts as local.
pub const LOCAL_DISTANCE: usize = 6;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("tagging target {target} with candidate {candidate:?}: {source}")]
    Tagging {
        target: usize,
        candidate: Option<usize>,
        #[source]
        source: TaggerError,
    },
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("invalid oracle configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub candidate_count: usize,
    pub retain: usize,
    pub positive_only: bool,
    pub exclusion_radius: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            candidate_count: 16,
            retain: 1,
            positive_only: true,
            exclusion_radius: 0,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<(), OracleError> {
        if self.candidate_count == 0 || self.retain == 0 {
            return Err(OracleError::Config("candidate and retain counts must be positive".into()));
        }
        if self.retain > self.candidate_count {
            return Err(OracleError::Config(format!(
                "retain ({}) exceeds candidate count ({})",
                self.retain, self.candidate_count
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    #[serde(flatten)]
    pub candidate: RankedCandidate,
    pub error_delta: i64,
}

/// Error-delta order: delta descending, then proximity, then index.
fn delta_order(a: &ScoredCandidate, b: &ScoredCandidate) -> std::cmp::Ordering {
    b.error_delta
        .cmp(&a.error_delta)
        .then(
            a.candidate
                .distance
                .unsigned_abs()
                .cmp(&b.candidate.distance.unsigned_abs()),
        )
        .then(a.candidate.sentence_index.cmp(&b.candidate.sentence_index))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleDecision {
    pub doc_id: String,
    pub target: usize,
    pub heuristic: Heuristic,
    pub baseline_errors: usize,
    pub ranked: Vec<ScoredCandidate>,
    pub retained: Vec<usize>,
}

impl OracleDecision {
    /// Signed distances of the retained sentences.
    pub fn retained_distances(&self) -> impl Iterator<Item = i64> + '_ {
        self.retained
            .iter()
            .map(move |&j| j as i64 - self.target as i64)
    }
}

#[derive(Debug, Clone)]
struct Ranking {
    baseline_errors: usize,
    ranked: Vec<ScoredCandidate>,
}

fn rank<T: Tagger + ?Sized>(
    tagger: &mut T,
    doc: &Document,
    target: usize,
    candidates: &[RankedCandidate],
    gold: &[BioTag],
) -> Result<Ranking, OracleError> {
    let tag = |tagger: &mut T, context: &[usize]| {
        tag_with_context(tagger, doc, target, context).map_err(|source| OracleError::Tagging {
            target,
            candidate: context.first().copied(),
            source,
        })
    };
    let baseline = tag(tagger, &[])?;
    let baseline_errors = token_error_count(gold, &baseline)?;
    let mut ranked = Vec::with_capacity(candidates.len());
    for candidate in candidates {
        let predicted = tag(tagger, &[candidate.sentence_index])?;
        let errors = token_error_count(gold, &predicted)?;
        ranked.push(ScoredCandidate {
            candidate: *candidate,
            error_delta: baseline_errors as i64 - errors as i64,
        });
    }
    ranked.sort_by(delta_order);
    Ok(Ranking { baseline_errors, ranked })
}

/// Scores each candidate individually against the gold tags of the target.
/// Calls the tagger once without context and once per candidate.
pub fn oracle_rank<T: Tagger + ?Sized>(
    tagger: &mut T,
    doc: &Document,
    target: usize,
    candidates: &[RankedCandidate],
    gold: &[BioTag],
) -> Result<Vec<ScoredCandidate>, OracleError> {
    Ok(rank(tagger, doc, target, candidates, gold)?.ranked)
}

/// The first `retain` ranked candidates, restricted to positive deltas when
/// `positive_only` is set.
pub fn select_retained(ranked: &[ScoredCandidate], retain: usize, positive_only: bool) -> Vec<usize> {
    ranked
        .iter()
        .filter(|c| !positive_only || c.error_delta > 0)
        .take(retain)
        .map(|c| c.candidate.sentence_index)
        .collect()
}

/// Draws candidates with `heuristic`, ranks them and keeps the best.
#[allow(clippy::too_many_arguments)]
pub fn oracle_retrieve<T: Tagger + ?Sized, R: Rng + ?Sized>(
    tagger: &mut T,
    doc: &Document,
    index: &SentenceIndex,
    target: usize,
    heuristic: Heuristic,
    config: &OracleConfig,
    gold: &[BioTag],
    rng: &mut R,
) -> Result<OracleDecision, OracleError> {
    config.validate()?;
    let candidates = retrieve(
        index,
        heuristic,
        target,
        config.candidate_count,
        config.exclusion_radius,
        rng,
    )?;
    let ranking = rank(tagger, doc, target, &candidates, gold)?;
    let retained = select_retained(&ranking.ranked, config.retain, config.positive_only);
    Ok(OracleDecision {
        doc_id: doc.id.clone(),
        target,
        heuristic,
        baseline_errors: ranking.baseline_errors,
        ranked: ranking.ranked,
        retained,
    })
}

/// Histogram of `|distance|` over retained context sentences.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DistanceDistribution {
    pub counts: BTreeMap<u64, usize>,
}

impl DistanceDistribution {
    pub fn add(&mut self, distance: i64) {
        *self.counts.entry(distance.unsigned_abs()).or_default() += 1;
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    /// Share of retained sentences with `|distance| <= radius`; 0 when
    /// nothing was retained.
    pub fn fraction_within(&self, radius: u64) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let near: usize = self.counts.range(..=radius).map(|(_, c)| c).sum();
        near as f64 / total as f64
    }

    /// Share within [`LOCAL_DISTANCE`].
    pub fn local_fraction(&self) -> f64 {
        self.fraction_within(LOCAL_DISTANCE as u64)
    }
}

pub fn distance_distribution<'a, I>(decisions: I) -> DistanceDistribution
where
    I: IntoIterator<Item = &'a OracleDecision>,
{
    let mut dist = DistanceDistribution::default();
    for decision in decisions {
        decision.retained_distances().for_each(|d| dist.add(d));
    }
    dist
}
