use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{TagRequest, TagResponse, Tagger, TaggerError};
use crate::corpus::Document;
use crate::metrics::extract_entities;
use crate::tags::{BioTag, EntityType};

/// Occurrence counts per entity type, indexed by [`EntityType::ordinal`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TypeCounts(pub [u32; 3]);

impl TypeCounts {
    pub fn add(&mut self, etype: EntityType) {
        self.0[etype.ordinal()] += 1;
    }

    pub fn get(&self, etype: EntityType) -> u32 {
        self.0[etype.ordinal()]
    }

    pub fn total(&self) -> u32 {
        self.0.iter().sum()
    }

    /// The only type with a non-zero count, if there is exactly one.
    pub fn sole_type(&self) -> Option<EntityType> {
        let mut present = EntityType::ALL.into_iter().filter(|&t| self.get(t) > 0);
        match (present.next(), present.next()) {
            (Some(t), None) => Some(t),
            _ => None,
        }
    }

    /// Highest count wins; ties go to the earlier type (PER, LOC, ORG).
    pub fn majority(&self) -> Option<EntityType> {
        let mut best: Option<EntityType> = None;
        for t in EntityType::ALL {
            if self.get(t) > 0 && best.is_none_or(|b| self.get(t) > self.get(b)) {
                best = Some(t);
            }
        }
        best
    }
}

/// A deterministic tagger that memorizes entity surfaces from training data
/// and resolves ambiguous surfaces from context.
///
/// Surfaces are matched greedily, longest first. A surface seen with a single
/// type is always tagged with it. For an ambiguous surface the tagger looks for
/// evidence: the word right before a mention is a *cue* when, in training, it
/// only ever preceded entities of one type (at least twice). A mention with its
/// own cue takes the cue's type; otherwise the cued mentions of the same
/// surface in the context (outside the target span) vote; with no votes the
/// global training majority decides. Ties resolve PER, then LOC, then ORG.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MemorizingTagger {
    surface_lexicon: BTreeMap<Vec<String>, TypeCounts>,
    cue_lexicon: BTreeMap<String, TypeCounts>,
    max_surface_len: usize,
}

const MIN_CUE_COUNT: u32 = 2;

struct Mention {
    start: usize,
    len: usize,
    counts: TypeCounts,
}

impl MemorizingTagger {
    pub fn surface_lexicon(&self) -> &BTreeMap<Vec<String>, TypeCounts> {
        &self.surface_lexicon
    }

    pub fn cue_lexicon(&self) -> &BTreeMap<String, TypeCounts> {
        &self.cue_lexicon
    }

    /// Adds a surface directly; mostly useful for tests and fixtures.
    pub fn insert_surface(&mut self, surface: &[&str], etype: EntityType, count: u32) {
        let entry = self
            .surface_lexicon
            .entry(surface.iter().map(|s| s.to_string()).collect())
            .or_default();
        entry.0[etype.ordinal()] += count;
        self.max_surface_len = self.max_surface_len.max(surface.len());
    }

    pub fn insert_cue(&mut self, word: &str, etype: EntityType, count: u32) {
        self.cue_lexicon.entry(word.to_lowercase()).or_default().0[etype.ordinal()] += count;
    }

    fn cue_type(&self, word: &str) -> Option<EntityType> {
        let counts = self.cue_lexicon.get(&word.to_lowercase())?;
        if counts.total() >= MIN_CUE_COUNT {
            counts.sole_type()
        } else {
            None
        }
    }

    fn find_mentions(&self, tokens: &[String]) -> Vec<Mention> {
        let mut mentions = Vec::new();
        let mut p = 0;
        while p < tokens.len() {
            let longest = (1..=self.max_surface_len.min(tokens.len() - p))
                .rev()
                .find_map(|len| self.surface_lexicon.get(&tokens[p..p + len]).map(|c| (len, *c)));
            match longest {
                Some((len, counts)) => {
                    mentions.push(Mention { start: p, len, counts });
                    p += len;
                }
                None => p += 1,
            }
        }
        mentions
    }

    fn own_cue(&self, tokens: &[String], mention: &Mention) -> Option<EntityType> {
        mention
            .start
            .checked_sub(1)
            .and_then(|prev| self.cue_type(&tokens[prev]))
    }

    /// Tags a raw token sequence whose target sentence spans
    /// `target_start..target_end`.
    pub fn tag_tokens(&self, tokens: &[String], target_start: usize, target_end: usize) -> Vec<BioTag> {
        let mentions = self.find_mentions(tokens);
        let cues: Vec<Option<EntityType>> = mentions.iter().map(|m| self.own_cue(tokens, m)).collect();
        let in_target = |m: &Mention| m.start < target_end && m.start + m.len > target_start;

        let mut tags = vec![BioTag::O; tokens.len()];
        for (i, mention) in mentions.iter().enumerate() {
            let etype = mention.counts.sole_type().or(cues[i]).or_else(|| {
                let surface = &tokens[mention.start..mention.start + mention.len];
                let mut votes = TypeCounts::default();
                for (j, other) in mentions.iter().enumerate() {
                    if j != i
                        && !in_target(other)
                        && tokens[other.start..other.start + other.len] == *surface
                    {
                        if let Some(t) = cues[j] {
                            votes.add(t);
                        }
                    }
                }
                votes.majority().or_else(|| mention.counts.majority())
            });
            let Some(etype) = etype else { continue };
            tags[mention.start] = BioTag::B(etype);
            for tag in &mut tags[mention.start + 1..mention.start + mention.len] {
                *tag = BioTag::I(etype);
            }
        }
        tags
    }
}

impl Tagger for MemorizingTagger {
    fn tag(&mut self, request: &TagRequest) -> Result<TagResponse, TaggerError> {
        (&*self).tag(request)
    }
}

impl Tagger for &MemorizingTagger {
    fn tag(&mut self, request: &TagRequest) -> Result<TagResponse, TaggerError> {
        request.validate()?;
        Ok(TagResponse {
            id: request.id.clone(),
            tags: self.tag_tokens(&request.tokens, request.target_start, request.target_end),
        })
    }
}

/// Builds the surface and cue lexicons from the gold entities of `train_docs`.
pub fn train_memorizing<'a, I>(train_docs: I) -> MemorizingTagger
where
    I: IntoIterator<Item = &'a Document>,
{
    let mut tagger = MemorizingTagger::default();
    for sentence in train_docs.into_iter().flat_map(|d| &d.sentences) {
        let tags = sentence.tags();
        for entity in extract_entities(&tags) {
            let surface: Vec<&str> = sentence.tokens[entity.start..=entity.end]
                .iter()
                .map(|t| t.text.as_str())
                .collect();
            tagger.insert_surface(&surface, entity.etype, 1);
            if let Some(prev) = entity.start.checked_sub(1) {
                if tags[prev].is_outside() {
                    tagger.insert_cue(&sentence.tokens[prev].text, entity.etype, 1);
                }
            }
        }
    }
    tagger
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Token;
    use EntityType::*;

    fn strings(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn tag(tagger: &MemorizingTagger, s: &str, target: (usize, usize)) -> Vec<String> {
        tagger
            .tag_tokens(&strings(s), target.0, target.1)
            .iter()
            .map(|t| t.to_string())
            .collect()
    }

    #[test]
    fn unambiguous_hit() {
        let mut t = MemorizingTagger::default();
        t.insert_surface(&["Gandalf"], Per, 3);
        assert_eq!(tag(&t, "Gandalf spoke", (0, 2)), vec!["B-PER", "O"]);
    }

    #[test]
    fn empty_lexicon_tags_nothing() {
        let t = MemorizingTagger::default();
        assert_eq!(tag(&t, "Gandalf spoke", (0, 2)), vec!["O", "O"]);
    }

    #[test]
    fn longest_match_wins() {
        let mut t = MemorizingTagger::default();
        t.insert_surface(&["New"], Org, 1);
        t.insert_surface(&["New", "Teod"], Loc, 1);
        assert_eq!(tag(&t, "to New Teod", (0, 3)), vec!["O", "B-LOC", "I-LOC"]);
    }

    #[test]
    fn ambiguous_surface_follows_context_cue() {
        let mut t = MemorizingTagger::default();
        t.insert_surface(&["Elantris"], Per, 1);
        t.insert_surface(&["Elantris"], Loc, 1);
        t.insert_cue("toward", Loc, 2);
        // Alone: 1/1 tie resolves to PER.
        assert_eq!(tag(&t, "on Elantris again", (0, 3)), vec!["O", "B-PER", "O"]);
        // Context sentence "walked toward Elantris" precedes the target.
        assert_eq!(
            tag(&t, "walked toward Elantris on Elantris again", (3, 6)),
            vec!["O", "O", "B-LOC", "O", "B-LOC", "O"]
        );
    }

    #[test]
    fn cue_inside_target_does_not_vote_for_other_target_mentions() {
        let mut t = MemorizingTagger::default();
        t.insert_surface(&["Arelon"], Per, 2);
        t.insert_surface(&["Arelon"], Loc, 1);
        t.insert_cue("toward", Loc, 2);
        assert_eq!(
            tag(&t, "toward Arelon and Arelon", (0, 4)),
            vec!["O", "B-LOC", "O", "B-PER"]
        );
    }

    #[test]
    fn impure_or_rare_cues_are_ignored() {
        let mut t = MemorizingTagger::default();
        t.insert_surface(&["Hoid"], Per, 2);
        t.insert_surface(&["Hoid"], Loc, 1);
        t.insert_cue("of", Loc, 5);
        t.insert_cue("of", Per, 5);
        t.insert_cue("into", Loc, 1);
        assert_eq!(tag(&t, "of Hoid into Hoid x", (4, 5)), vec!["O", "B-PER", "O", "B-PER", "O"]);
    }

    #[test]
    fn training_counts_surfaces_and_cues() {
        let doc = Document::from_sentences(
            "a",
            vec![
                vec![Token::new("Ann", BioTag::B(Per)), Token::new("ran", BioTag::O)],
                vec![Token::new("met", BioTag::O), Token::new("Ann", BioTag::B(Per))],
                vec![Token::new("to", BioTag::O), Token::new("Ann", BioTag::B(Loc))],
            ],
        );
        let t = train_memorizing([&doc]);
        let counts = t.surface_lexicon()[&vec!["Ann".to_string()]];
        assert_eq!(counts.get(Per), 2);
        assert_eq!(counts.get(Loc), 1);
        assert_eq!(t.cue_lexicon()["met"].get(Per), 1);

        let empty = Document::from_sentences("b", vec![vec![Token::new("x", BioTag::O)]]);
        assert!(train_memorizing([&empty]).surface_lexicon().is_empty());
    }

    #[test]
    fn majority_tie_order() {
        assert_eq!(TypeCounts([1, 1, 1]).majority(), Some(Per));
        assert_eq!(TypeCounts([0, 2, 2]).majority(), Some(Loc));
        assert_eq!(TypeCounts([0, 0, 0]).majority(), None);
        assert_eq!(TypeCounts([0, 0, 3]).sole_type(), Some(Org));
        assert_eq!(TypeCounts([1, 0, 3]).sole_type(), None);
    }
}
