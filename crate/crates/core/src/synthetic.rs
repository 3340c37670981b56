//! Generated novels whose entity types can only be resolved from context.
//!
//! A pool of names is shared by all documents, but each document decides on
//! its own whether a name denotes a person, a place or an organisation. Inside
//! a document a name is always used with the same type. Every name gets
//! *cue* mentions, where the word right before the name gives its type away
//! ("rode toward X", "greeted X", "joined X"), and *bare* mentions at the start
//! of a sentence, which carry no such hint. The remaining sentences are filler
//! without entities or nouns.
//!
//! With `min_cue_distance` set, every bare mention is placed at least that many
//! sentences away from every cue mention of the same document, so local
//! windows provably cannot see the cue.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, CorpusError, Document, Token};
use crate::tags::{BioTag, EntityType};

/// Names whose type varies from one document to the next.
pub const SHARED_NAMES: &[&str] = &[
    "Elantris", "Arelon", "Teod", "Kelsier", "Luthadel", "Hoid", "Scadrial", "Roshar", "Kholinar",
    "Urithiru", "Taldain", "Fjorden", "Silver Hall", "Iron Gate", "Duladel", "Svorden",
];

/// Names that are always people.
pub const STABLE_PEOPLE: &[&str] = &["Galladon", "Sarene", "Raoden", "Hrathen"];

const SYLLABLES: &[&str] = &["ka", "lo", "ren", "dar", "mi", "tos", "vel", "an", "zu", "ri", "bel", "on"];

fn cue_templates(etype: EntityType) -> &'static [(&'static str, &'static str)] {
    match etype {
        EntityType::Loc => &[("we rode toward", "at dawn ."), ("smoke rose inside", "that night .")],
        EntityType::Per => &[("everyone greeted", "warmly ."), ("she sat beside", "in silence .")],
        EntityType::Org => &[("many joined", "that winter ."), ("the merchants funded", "again .")],
    }
}

const BARE_TEMPLATES: &[&str] = &[
    "was mentioned again .",
    "came up once more .",
    "seemed far away now .",
    "was all anyone talked about .",
];

const FILLER: &[&str] = &[
    "It was late and quiet .",
    "Nothing else happened .",
    "We walked on slowly .",
    "She said nothing more .",
    "He nodded once .",
    "They waited for a while .",
    "It rained without pause .",
    "Nobody answered .",
    "We were tired but kept going .",
    "Then it was over .",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticConfig {
    pub n_docs: usize,
    pub sentences_per_doc: usize,
    /// Shared names used in each document.
    pub names_per_doc: usize,
    /// Cue mentions per shared name per document.
    pub cue_mentions: usize,
    /// Bare (cue-less) mentions per shared name per document.
    pub bare_mentions: usize,
    /// Sentences mentioning a stable person or a document-specific name.
    pub other_mentions: usize,
    /// Minimum distance between a bare mention and any cue mention; 0 places
    /// everything at random.
    pub min_cue_distance: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_docs: 20,
            sentences_per_doc: 60,
            names_per_doc: 4,
            cue_mentions: 3,
            bare_mentions: 3,
            other_mentions: 6,
            min_cue_distance: 0,
            seed: 0,
        }
    }
}

fn tokens(words: &str, tag: BioTag) -> Vec<Token> {
    words.split_whitespace().map(|w| Token::new(w, tag)).collect()
}

fn name_tokens(name: &str, etype: EntityType) -> Vec<Token> {
    name.split_whitespace()
        .enumerate()
        .map(|(i, w)| Token::new(w, if i == 0 { BioTag::B(etype) } else { BioTag::I(etype) }))
        .collect()
}

fn cue_sentence<R: Rng>(name: &str, etype: EntityType, rng: &mut R) -> Vec<Token> {
    let (before, after) = cue_templates(etype).choose(rng).unwrap();
    let mut s = tokens(before, BioTag::O);
    capitalize(&mut s[0].text);
    s.extend(name_tokens(name, etype));
    s.extend(tokens(after, BioTag::O));
    s
}

fn bare_sentence<R: Rng>(name: &str, etype: EntityType, rng: &mut R) -> Vec<Token> {
    let mut s = name_tokens(name, etype);
    s.extend(tokens(BARE_TEMPLATES.choose(rng).unwrap(), BioTag::O));
    s
}

fn capitalize(word: &mut String) {
    if let Some(first) = word.get(..1) {
        let upper = first.to_uppercase();
        word.replace_range(..1, &upper);
    }
}

fn local_name<R: Rng>(doc: usize, rng: &mut R) -> String {
    let mut name: String = (0..2).map(|_| *SYLLABLES.choose(rng).unwrap()).collect();
    name.push_str(SYLLABLES[doc % SYLLABLES.len()]);
    capitalize(&mut name);
    name
}

fn random_type<R: Rng>(rng: &mut R) -> EntityType {
    match rng.gen_range(0..10) {
        0..=4 => EntityType::Per,
        5..=8 => EntityType::Loc,
        _ => EntityType::Org,
    }
}

/// Generates a corpus with ids `synth-00`, `synth-01`, ...
pub fn generate(config: &SyntheticConfig) -> Result<Corpus, CorpusError> {
    let names_per_doc = config.names_per_doc.min(SHARED_NAMES.len());
    let n_cues = names_per_doc * config.cue_mentions;
    let n_bare = names_per_doc * config.bare_mentions;
    let needed = n_cues + n_bare + config.other_mentions + config.min_cue_distance;
    if config.n_docs == 0 || config.sentences_per_doc < needed {
        return Err(CorpusError::InvalidArgument(format!(
            "{} sentences per document cannot hold {needed} placed sentences",
            config.sentences_per_doc
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let documents = (0..config.n_docs)
        .map(|d| generate_document(config, d, names_per_doc, &mut rng))
        .collect();
    Corpus::new(documents)
}

fn generate_document<R: Rng>(config: &SyntheticConfig, d: usize, names_per_doc: usize, rng: &mut R) -> Document {
    let len = config.sentences_per_doc;
    let names: Vec<(&str, EntityType)> = SHARED_NAMES
        .choose_multiple(rng, names_per_doc)
        .map(|&n| (n, random_type(rng)))
        .collect();

    let mut cues = Vec::new();
    let mut bare = Vec::new();
    for &(name, etype) in &names {
        cues.extend((0..config.cue_mentions).map(|_| cue_sentence(name, etype, rng)));
        bare.extend((0..config.bare_mentions).map(|_| bare_sentence(name, etype, rng)));
    }
    let local = local_name(d, rng);
    let others: Vec<Vec<Token>> = (0..config.other_mentions)
        .map(|i| {
            let name = if i % 2 == 0 { STABLE_PEOPLE.choose(rng).unwrap().to_string() } else { local.clone() };
            let mut s = name_tokens(&name, EntityType::Per);
            s.extend(tokens("smiled at us .", BioTag::O));
            s
        })
        .collect();

    let mut slots: Vec<Option<Vec<Token>>> = vec![None; len];
    let place = |positions: Vec<usize>, sentences: Vec<Vec<Token>>, slots: &mut Vec<Option<Vec<Token>>>| {
        for (p, s) in positions.into_iter().zip(sentences) {
            slots[p] = Some(s);
        }
    };
    if config.min_cue_distance == 0 {
        let mut positions: Vec<usize> = (0..len).collect();
        positions.shuffle(rng);
        let mut all = cues;
        all.extend(bare);
        place(positions, all, &mut slots);
    } else {
        // Cues go to [0, cue_end), bare mentions to [cue_end - 1 + distance, len).
        let slack = len - cues.len() - bare.len() - config.min_cue_distance;
        let cue_end = cues.len() + slack / 2;
        let mut cue_positions: Vec<usize> = (0..cue_end).collect();
        cue_positions.shuffle(rng);
        let mut bare_positions: Vec<usize> = (cue_end - 1 + config.min_cue_distance..len).collect();
        bare_positions.shuffle(rng);
        place(cue_positions, cues, &mut slots);
        place(bare_positions, bare, &mut slots);
    }
    let mut free: Vec<usize> = (0..len).filter(|&p| slots[p].is_none()).collect();
    free.shuffle(rng);
    place(free, others, &mut slots);

    let sentences = slots
        .into_iter()
        .map(|s| s.unwrap_or_else(|| tokens(FILLER.choose(rng).unwrap(), BioTag::O)))
        .collect();
    Document::from_sentences(format!("synth-{d:02}"), sentences)
}
