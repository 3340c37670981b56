use std::collections::{BTreeSet, HashSet};
use std::sync::OnceLock;

use crate::corpus::Sentence;

const BUNDLED_NOUNS: &str = include_str!("lexicon/nouns.txt");
const FUNCTION_WORDS: &str = include_str!("lexicon/function_words.txt");

/// Finds the nouns of a sentence, returned lowercased.
pub trait NounDetector: Send + Sync {
    fn detect(&self, sentence: &Sentence) -> BTreeSet<String>;
}

pub fn detect_nouns(sentence: &Sentence, detector: &dyn NounDetector) -> BTreeSet<String> {
    detector.detect(sentence)
}

/// Capitalization plus a common-noun lexicon.
///
/// A token is a noun when it is capitalized or when its lowercase form is in
/// the lexicon. Function words ("I", "The", "He") never count, which is what
/// keeps ordinary sentence-initial capitals out.
#[derive(Debug, Clone)]
pub struct LexiconNounDetector {
    lexicon: HashSet<String>,
}

fn function_words() -> &'static HashSet<&'static str> {
    static WORDS: OnceLock<HashSet<&'static str>> = OnceLock::new();
    WORDS.get_or_init(|| FUNCTION_WORDS.lines().filter(|l| !l.is_empty()).collect())
}

impl LexiconNounDetector {
    pub fn with_lexicon<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        LexiconNounDetector {
            lexicon: words
                .into_iter()
                .map(|w| w.as_ref().trim().to_lowercase())
                .filter(|w| !w.is_empty())
                .collect(),
        }
    }

    pub fn lexicon_len(&self) -> usize {
        self.lexicon.len()
    }

    fn is_noun(&self, token: &str) -> bool {
        let Some(first) = token.chars().next() else {
            return false;
        };
        if !token.chars().any(char::is_alphabetic) {
            return false;
        }
        let lower = token.to_lowercase();
        if function_words().contains(lower.as_str()) {
            return false;
        }
        first.is_uppercase() || self.lexicon.contains(&lower)
    }
}

impl Default for LexiconNounDetector {
    /// Uses the bundled lexicon of common English nouns.
    fn default() -> Self {
        Self::with_lexicon(BUNDLED_NOUNS.lines())
    }
}

impl NounDetector for LexiconNounDetector {
    fn detect(&self, sentence: &Sentence) -> BTreeSet<String> {
        sentence
            .texts()
            .filter(|text| self.is_noun(text))
            .map(str::to_lowercase)
            .collect()
    }
}
