//! Annotation review flags.
//!
//! These rules only point at suspicious spans for a human to look at; they
//! never change the corpus. Character-name matching is exact and
//! case-sensitive once whitespace is normalized.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, CorpusError, Document, Sentence};
use crate::metrics::extract_entities;
use crate::tags::EntityType;

/// Character names of one novel, read from `<doc_id>.txt` (one per line).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharacterList {
    pub doc_id: String,
    pub names: BTreeSet<String>,
}

fn normalize(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl CharacterList {
    pub fn new<I, S>(doc_id: impl Into<String>, names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        CharacterList {
            doc_id: doc_id.into(),
            names: names
                .into_iter()
                .map(|n| normalize(n.as_ref()))
                .filter(|n| !n.is_empty())
                .collect(),
        }
    }

    pub fn contains(&self, surface: &str) -> bool {
        self.names.contains(&normalize(surface))
    }
}

/// Reads every `*.txt` file in `dir`. Lists without any name are skipped.
pub fn load_character_lists(dir: impl AsRef<Path>) -> Result<BTreeMap<String, CharacterList>, CorpusError> {
    let dir = dir.as_ref();
    let io = |path: &Path, source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut lists = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| io(dir, e))? {
        let path = entry.map_err(|e| io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("txt") {
            continue;
        }
        let Some(id) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        let text = fs::read_to_string(&path).map_err(|e| io(&path, e))?;
        let list = CharacterList::new(id, text.lines());
        if list.names.is_empty() {
            log::warn!("character list {} is empty, ignoring it", path.display());
            continue;
        }
        lists.insert(id.to_string(), list);
    }
    Ok(lists)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    /// A character name left unannotated.
    CharlistMissing,
    /// A PER entity that is not a known character.
    NotInCharlist,
    /// A PER entity with no capitalized token.
    UncapitalizedPer,
}

impl Rule {
    pub fn as_str(self) -> &'static str {
        match self {
            Rule::CharlistMissing => "charlist-missing",
            Rule::NotInCharlist => "not-in-charlist",
            Rule::UncapitalizedPer => "uncapitalized-per",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A span to review. `start` and `end` are inclusive token indices within
/// the sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewFlag {
    pub doc_id: String,
    pub sentence: usize,
    pub start: usize,
    pub end: usize,
    pub rule: Rule,
    pub surface: String,
    pub note: String,
}

impl ReviewFlag {
    fn new(doc: &Document, sentence: &Sentence, start: usize, end: usize, rule: Rule) -> Self {
        let surface = surface(sentence, start, end);
        let note = match rule {
            Rule::CharlistMissing => format!("character \"{surface}\" is not annotated"),
            Rule::NotInCharlist => format!("PER \"{surface}\" is not in the character list"),
            Rule::UncapitalizedPer => format!("PER \"{surface}\" has no capitalized token"),
        };
        ReviewFlag {
            doc_id: doc.id.clone(),
            sentence: sentence.doc_index,
            start,
            end,
            rule,
            surface,
            note,
        }
    }
}

fn surface(sentence: &Sentence, start: usize, end: usize) -> String {
    sentence.tokens[start..=end]
        .iter()
        .map(|t| t.text.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

fn with_lists<'a, F>(corpus: &'a Corpus, lists: &'a BTreeMap<String, CharacterList>, mut f: F) -> Vec<ReviewFlag>
where
    F: FnMut(&'a Document, &'a CharacterList, &mut Vec<ReviewFlag>),
{
    let mut flags = Vec::new();
    for doc in corpus.documents() {
        match lists.get(&doc.id) {
            Some(list) => f(doc, list, &mut flags),
            None => log::warn!("no character list for `{}`, skipping", doc.id),
        }
    }
    flags
}

/// Spans that spell a character name but are tagged `O` throughout. At each
/// position the longest matching name wins and matches do not overlap.
pub fn flag_charlist_missing(corpus: &Corpus, lists: &BTreeMap<String, CharacterList>) -> Vec<ReviewFlag> {
    with_lists(corpus, lists, |doc, list, flags| {
        let names: Vec<Vec<&str>> = list
            .names
            .iter()
            .map(|n| n.split(' ').collect())
            .collect();
        let longest = names.iter().map(Vec::len).max().unwrap_or(0);
        for sentence in &doc.sentences {
            let mut p = 0;
            while p < sentence.len() {
                let hit = (1..=longest.min(sentence.len() - p)).rev().find(|&len| {
                    let window = &sentence.tokens[p..p + len];
                    window.iter().all(|t| t.tag.is_outside())
                        && names
                            .iter()
                            .any(|n| n.len() == len && n.iter().zip(window).all(|(a, t)| *a == t.text))
                });
                match hit {
                    Some(len) => {
                        flags.push(ReviewFlag::new(doc, sentence, p, p + len - 1, Rule::CharlistMissing));
                        p += len;
                    }
                    None => p += 1,
                }
            }
        }
    })
}

fn per_entities(sentence: &Sentence) -> impl Iterator<Item = (usize, usize)> {
    extract_entities(&sentence.tags())
        .into_iter()
        .filter(|e| e.etype == EntityType::Per)
        .map(|e| (e.start, e.end))
}

/// PER entities whose surface is not a listed character.
pub fn flag_not_in_charlist(corpus: &Corpus, lists: &BTreeMap<String, CharacterList>) -> Vec<ReviewFlag> {
    with_lists(corpus, lists, |doc, list, flags| {
        for sentence in &doc.sentences {
            for (start, end) in per_entities(sentence) {
                if !list.contains(&surface(sentence, start, end)) {
                    flags.push(ReviewFlag::new(doc, sentence, start, end, Rule::NotInCharlist));
                }
            }
        }
    })
}

/// PER entities in which no token starts with an uppercase letter.
pub fn flag_uncapitalized_per(corpus: &Corpus) -> Vec<ReviewFlag> {
    let mut flags = Vec::new();
    for doc in corpus.documents() {
        for sentence in &doc.sentences {
            for (start, end) in per_entities(sentence) {
                let capitalized = sentence.tokens[start..=end]
                    .iter()
                    .any(|t| t.text.chars().next().is_some_and(char::is_uppercase));
                if !capitalized {
                    flags.push(ReviewFlag::new(doc, sentence, start, end, Rule::UncapitalizedPer));
                }
            }
        }
    }
    flags
}

/// All three rules, ordered by document, sentence, span and rule.
pub fn flag_all(corpus: &Corpus, lists: &BTreeMap<String, CharacterList>) -> Vec<ReviewFlag> {
    let mut flags = flag_charlist_missing(corpus, lists);
    flags.extend(flag_not_in_charlist(corpus, lists));
    flags.extend(flag_uncapitalized_per(corpus));
    flags.sort_by(|a, b| {
        (&a.doc_id, a.sentence, a.start, a.end, a.rule).cmp(&(&b.doc_id, b.sentence, b.start, b.end, b.rule))
    });
    flags
}
