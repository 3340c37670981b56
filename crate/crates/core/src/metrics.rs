//! Entity decoding and exact-match precision/recall/F1.
//!
//! Decoding is lenient: an `I-X` that does not continue an open `X` entity
//! starts a new one, and a type change closes the open entity. This is the
//! behaviour of seqeval's default (non-strict) mode, and scores computed here
//! agree with it exactly, including the zero-division policy (any ratio with a
//! zero denominator is 0).

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tags::{BioTag, EntityType};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("gold has {gold} sentences but prediction has {pred}")]
    SentenceCount { gold: usize, pred: usize },
    #[error("sentence {sentence}: gold has {gold} tags but prediction has {pred}")]
    SentenceLength {
        sentence: usize,
        gold: usize,
        pred: usize,
    },
    #[error("tag sequences differ in length ({gold} vs {pred})")]
    Length { gold: usize, pred: usize },
}

/// An entity span with inclusive token bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Entity {
    pub start: usize,
    pub end: usize,
    pub etype: EntityType,
}

impl Entity {
    pub fn new(etype: EntityType, start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Entity { start, end, etype }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Decodes maximal entity spans, sorted by start.
pub fn extract_entities(tags: &[BioTag]) -> Vec<Entity> {
    let mut entities = Vec::new();
    let mut open: Option<(EntityType, usize)> = None;
    for (i, &tag) in tags.iter().enumerate() {
        open = match (open, tag) {
            (Some((t, start)), BioTag::I(u)) if t == u => Some((t, start)),
            (prev, tag) => {
                if let Some((t, start)) = prev {
                    entities.push(Entity::new(t, start, i - 1));
                }
                tag.entity_type().map(|t| (t, i))
            }
        };
    }
    if let Some((t, start)) = open {
        entities.push(Entity::new(t, start, tags.len() - 1));
    }
    entities
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Scores {
    /// Scores from match counts, with 0 for every zero-denominator ratio.
    pub fn from_counts(true_positives: usize, predicted: usize, gold: usize) -> Self {
        let precision = ratio(true_positives, predicted);
        let recall = ratio(true_positives, gold);
        let denominator = precision + recall;
        let f1 = if denominator == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / denominator
        };
        Scores {
            precision,
            recall,
            f1,
        }
    }
}

fn ratio(numerator: usize, denominator: usize) -> f64 {
    if denominator == 0 {
        0.0
    } else {
        numerator as f64 / denominator as f64
    }
}

/// Micro-averaged scores plus a breakdown for every type that occurs in the
/// gold or predicted entities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_type: BTreeMap<EntityType, Scores>,
    pub support: BTreeMap<EntityType, usize>,
}

impl MetricsReport {
    pub fn scores(&self) -> Scores {
        Scores {
            precision: self.precision,
            recall: self.recall,
            f1: self.f1,
        }
    }
}

#[derive(Default, Clone, Copy)]
struct Counts {
    true_positives: usize,
    predicted: usize,
    gold: usize,
}

/// Scores `pred` against `gold`, sentence by sentence. An entity matches only
/// when type, start and end all agree within the same sentence.
pub fn evaluate<G, P>(gold: &[G], pred: &[P]) -> Result<MetricsReport, MetricsError>
where
    G: AsRef<[BioTag]>,
    P: AsRef<[BioTag]>,
{
    if gold.len() != pred.len() {
        return Err(MetricsError::SentenceCount {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    let mut counts: BTreeMap<EntityType, Counts> = BTreeMap::new();
    for (sentence, (g, p)) in gold.iter().zip(pred).enumerate() {
        let (g, p) = (g.as_ref(), p.as_ref());
        if g.len() != p.len() {
            return Err(MetricsError::SentenceLength {
                sentence,
                gold: g.len(),
                pred: p.len(),
            });
        }
        let gold_entities: BTreeSet<Entity> = extract_entities(g).into_iter().collect();
        let pred_entities: BTreeSet<Entity> = extract_entities(p).into_iter().collect();
        for e in &gold_entities {
            counts.entry(e.etype).or_default().gold += 1;
        }
        for e in &pred_entities {
            let c = counts.entry(e.etype).or_default();
            c.predicted += 1;
            if gold_entities.contains(e) {
                c.true_positives += 1;
            }
        }
    }

    let mut total = Counts::default();
    let mut per_type = BTreeMap::new();
    let mut support = BTreeMap::new();
    for (&etype, c) in &counts {
        total.true_positives += c.true_positives;
        total.predicted += c.predicted;
        total.gold += c.gold;
        per_type.insert(
            etype,
            Scores::from_counts(c.true_positives, c.predicted, c.gold),
        );
        support.insert(etype, c.gold);
    }
    let overall = Scores::from_counts(total.true_positives, total.predicted, total.gold);
    Ok(MetricsReport {
        precision: overall.precision,
        recall: overall.recall,
        f1: overall.f1,
        per_type,
        support,
    })
}

/// Number of positions where the two tag sequences disagree.
pub fn token_error_count(gold: &[BioTag], pred: &[BioTag]) -> Result<usize, MetricsError> {
    if gold.len() != pred.len() {
        return Err(MetricsError::Length {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    Ok(gold.iter().zip(pred).filter(|(g, p)| g != p).count())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use EntityType::*;

    fn tags(s: &str) -> Vec<BioTag> {
        s.split_whitespace().map(|t| t.parse().unwrap()).collect()
    }

    #[test]
    fn canonical_span() {
        assert_eq!(
            extract_entities(&tags("B-PER I-PER O")),
            vec![Entity::new(Per, 0, 1)]
        );
    }

    #[test]
    fn leading_inside_tag_opens_an_entity() {
        assert_eq!(
            extract_entities(&tags("O I-LOC I-LOC")),
            vec![Entity::new(Loc, 1, 2)]
        );
    }

    #[test]
    fn consecutive_begins_are_separate_entities() {
        assert_eq!(
            extract_entities(&tags("B-PER B-PER")),
            vec![Entity::new(Per, 0, 0), Entity::new(Per, 1, 1)]
        );
    }

    #[test]
    fn type_change_inside_closes_entity() {
        assert_eq!(
            extract_entities(&tags("B-PER I-LOC I-LOC O I-ORG")),
            vec![
                Entity::new(Per, 0, 0),
                Entity::new(Loc, 1, 2),
                Entity::new(Org, 4, 4)
            ]
        );
    }

    #[test]
    fn identical_prediction_scores_one() {
        let gold = vec![tags("B-PER I-PER O B-LOC")];
        let report = evaluate(&gold, &gold).unwrap();
        assert_eq!(report.scores(), Scores::from_counts(2, 2, 2));
        assert_eq!(report.f1, 1.0);
        assert_eq!(report.support[&Per], 1);
    }

    #[test]
    fn boundary_miss_is_not_a_match() {
        let report = evaluate(&[tags("B-PER I-PER")], &[tags("B-PER O")]).unwrap();
        assert_eq!(report.precision, 0.0);
        assert_eq!(report.recall, 0.0);
        assert_eq!(report.f1, 0.0);
    }

    #[test]
    fn no_entities_anywhere_scores_zero() {
        let report = evaluate(&[tags("O O")], &[tags("O O")]).unwrap();
        assert_eq!(report.scores(), Scores::default());
        assert!(report.per_type.is_empty());
    }

    #[test]
    fn shape_mismatch_names_the_sentence() {
        let err = evaluate(&[tags("O"), tags("O O")], &[tags("O"), tags("O")]).unwrap_err();
        assert_eq!(
            err,
            MetricsError::SentenceLength {
                sentence: 1,
                gold: 2,
                pred: 1
            }
        );
        assert!(matches!(
            evaluate(&[tags("O")], &Vec::<Vec<BioTag>>::new()),
            Err(MetricsError::SentenceCount { gold: 1, pred: 0 })
        ));
    }

    #[test]
    fn token_errors() {
        assert_eq!(
            token_error_count(&tags("B-PER O"), &tags("B-PER O")).unwrap(),
            0
        );
        assert_eq!(token_error_count(&tags("B-PER O"), &tags("O O")).unwrap(), 1);
        assert_eq!(
            token_error_count(&tags("B-PER I-PER O"), &tags("B-LOC I-PER B-PER")).unwrap(),
            2
        );
        assert!(token_error_count(&tags("O"), &tags("O O")).is_err());
    }

    fn tag_seq(max: usize) -> impl Strategy<Value = Vec<BioTag>> {
        prop::collection::vec(prop::sample::select(BioTag::ALL.to_vec()), 1..max)
    }

    fn pair(max: usize) -> impl Strategy<Value = (Vec<BioTag>, Vec<BioTag>)> {
        tag_seq(max).prop_flat_map(|g| {
            let n = g.len();
            (
                Just(g),
                prop::collection::vec(prop::sample::select(BioTag::ALL.to_vec()), n),
            )
        })
    }

    proptest! {
        #[test]
        fn spans_are_sorted_and_disjoint(seq in tag_seq(60)) {
            let entities = extract_entities(&seq);
            for w in entities.windows(2) {
                prop_assert!(w[0].end < w[1].start);
            }
            for e in &entities {
                prop_assert!(e.start <= e.end && e.end < seq.len());
            }
        }

        #[test]
        fn swapping_gold_and_pred_swaps_precision_and_recall((g, p) in pair(40)) {
            let forward = evaluate(&[&g], &[&p]).unwrap();
            let backward = evaluate(&[&p], &[&g]).unwrap();
            prop_assert_eq!(forward.precision, backward.recall);
            prop_assert_eq!(forward.recall, backward.precision);
            prop_assert!((forward.f1 - backward.f1).abs() < 1e-12);
        }

        #[test]
        fn zero_token_errors_iff_perfect_f1((g, p) in pair(30)) {
            prop_assume!(!extract_entities(&g).is_empty());
            let errors = token_error_count(&g, &p).unwrap();
            let f1 = evaluate(&[&g], &[&p]).unwrap().f1;
            // Distinct tag sequences can decode to the same entity set
            // (`I-X` vs `B-X` at an entity start), so only one direction is
            // an equivalence on raw tags.
            if errors == 0 {
                prop_assert_eq!(f1, 1.0);
            }
            if f1 == 1.0 {
                prop_assert_eq!(extract_entities(&g), extract_entities(&p));
            }
        }

        #[test]
        fn f1_is_harmonic_mean((g, p) in pair(40)) {
            let r = evaluate(&[&g], &[&p]).unwrap();
            if r.precision + r.recall > 0.0 {
                let expected = 2.0 * r.precision * r.recall / (r.precision + r.recall);
                prop_assert!((r.f1 - expected).abs() < 1e-12);
            } else {
                prop_assert_eq!(r.f1, 0.0);
            }
        }
    }
}
