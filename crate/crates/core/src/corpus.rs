//! Tokenized, BIO-annotated documents and the `.conll` directory format.
//!
//! A corpus is a directory; each `*.conll` file is one document whose id is
//! the file stem. Files hold one `token<TAB>tag` pair per line and separate
//! sentences with a blank line.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::extract_entities;
use crate::tags::{BioTag, EntityType};

pub const DOCUMENT_EXTENSION: &str = "conll";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{0}: document has no sentences")]
    EmptyDocument(PathBuf),
    #[error("no .conll documents found in {0}")]
    NoDocuments(PathBuf),
    #[error("duplicate document id `{0}`")]
    DuplicateId(String),
    #[error("{0}")]
    InvalidArgument(String),
}

impl CorpusError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub tag: BioTag,
}

impl Token {
    pub fn new(text: impl Into<String>, tag: BioTag) -> Self {
        Token {
            text: text.into(),
            tag,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    /// 0-based position in the owning document.
    pub doc_index: usize,
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> + '_ {
        self.tokens.iter().map(|t| t.text.as_str())
    }

    pub fn tags(&self) -> Vec<BioTag> {
        self.tokens.iter().map(|t| t.tag).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub sentences: Vec<Sentence>,
}

impl Document {
    /// Builds a document from token sequences, numbering sentences in order.
    /// Empty sentences are dropped.
    pub fn from_sentences(id: impl Into<String>, sentences: Vec<Vec<Token>>) -> Self {
        let sentences = sentences
            .into_iter()
            .filter(|s| !s.is_empty())
            .enumerate()
            .map(|(doc_index, tokens)| Sentence { doc_index, tokens })
            .collect();
        Document {
            id: id.into(),
            sentences,
        }
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn sentence(&self, index: usize) -> Option<&Sentence> {
        self.sentences.get(index)
    }

    /// Parses the `.conll` text of one document. `path` is only used in error
    /// messages.
    pub fn parse(id: impl Into<String>, text: &str, path: &Path) -> Result<Self, CorpusError> {
        let mut sentences = Vec::new();
        let mut current = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.is_empty() {
                if !current.is_empty() {
                    sentences.push(std::mem::take(&mut current));
                }
                continue;
            }
            let parse_err = |message: String| CorpusError::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                message,
            };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 2 {
                return Err(parse_err(format!(
                    "expected `token<TAB>tag`, found {} field(s)",
                    fields.len()
                )));
            }
            let (text, tag) = (fields[0], fields[1]);
            if text.is_empty() || text.chars().any(char::is_whitespace) {
                return Err(parse_err(format!("invalid token {text:?}")));
            }
            let tag: BioTag = tag.parse().map_err(|e| parse_err(format!("{e}")))?;
            current.push(Token::new(text, tag));
        }
        if !current.is_empty() {
            sentences.push(current);
        }
        if sentences.is_empty() {
            return Err(CorpusError::EmptyDocument(path.to_path_buf()));
        }
        Ok(Document::from_sentences(id, sentences))
    }

    /// Serializes back to the `.conll` format.
    pub fn to_conll(&self) -> String {
        let mut out = String::new();
        for (i, sentence) in self.sentences.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            for token in &sentence.tokens {
                out.push_str(&token.text);
                out.push('\t');
                out.push_str(&token.tag.to_string());
                out.push('\n');
            }
        }
        out
    }
}

/// Documents ordered by id, with unique ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    documents: Vec<Document>,
}

impl Corpus {
    pub fn new(mut documents: Vec<Document>) -> Result<Self, CorpusError> {
        documents.sort_by(|a, b| a.id.cmp(&b.id));
        for pair in documents.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(CorpusError::DuplicateId(pair[0].id.clone()));
            }
        }
        Ok(Corpus { documents })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.documents
            .binary_search_by(|d| d.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.documents[i])
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> + '_ {
        self.documents.iter().map(|d| d.id.as_str())
    }
}

pub fn load_corpus(root: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let root = root.as_ref();
    let entries = fs::read_dir(root).map_err(|e| CorpusError::io(root, e))?;
    let mut documents = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CorpusError::io(root, e))?.path();
        if !path.is_file() || path.extension().and_then(|e| e.to_str()) != Some(DOCUMENT_EXTENSION)
        {
            continue;
        }
        let id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| CorpusError::InvalidArgument(format!("bad file name {path:?}")))?
            .to_string();
        let text = fs::read_to_string(&path).map_err(|e| CorpusError::io(&path, e))?;
        documents.push(Document::parse(id, &text, &path)?);
    }
    if documents.is_empty() {
        return Err(CorpusError::NoDocuments(root.to_path_buf()));
    }
    Corpus::new(documents)
}

/// Writes one `<id>.conll` file per document, creating `dir` if needed.
pub fn write_corpus(corpus: &Corpus, dir: impl AsRef<Path>) -> Result<(), CorpusError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| CorpusError::io(dir, e))?;
    for doc in corpus.documents() {
        let path = dir.join(format!("{}.{DOCUMENT_EXTENSION}", doc.id));
        fs::write(&path, doc.to_conll()).map_err(|e| CorpusError::io(&path, e))?;
    }
    Ok(())
}

/// Number of gold entities per type; every type is present, possibly with 0.
pub fn entity_counts(corpus: &Corpus) -> BTreeMap<EntityType, usize> {
    let mut counts: BTreeMap<EntityType, usize> =
        EntityType::ALL.iter().map(|&t| (t, 0)).collect();
    for sentence in corpus.documents().iter().flat_map(|d| &d.sentences) {
        for entity in extract_entities(&sentence.tags()) {
            *counts.entry(entity.etype).or_default() += 1;
        }
    }
    counts
}

/// Fixed-width histogram; bucket `b` covers `[b * width, (b + 1) * width)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub bucket_width: usize,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// `(lower, upper, count)` for every bucket, empty ones included.
    pub fn buckets(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.counts
            .iter()
            .enumerate()
            .map(|(b, &c)| (b * self.bucket_width, (b + 1) * self.bucket_width, c))
    }

    pub fn non_empty(&self) -> BTreeMap<usize, usize> {
        self.buckets()
            .filter(|&(_, _, c)| c > 0)
            .map(|(lo, _, c)| (lo, c))
            .collect()
    }
}

/// Histogram of sentences per document.
pub fn length_histogram(corpus: &Corpus, bucket_width: usize) -> Result<Histogram, CorpusError> {
    if bucket_width == 0 {
        return Err(CorpusError::InvalidArgument(
            "bucket width must be at least 1".into(),
        ));
    }
    let max = corpus.documents().iter().map(Document::len).max().unwrap_or(0);
    let mut counts = vec![0; max / bucket_width + 1];
    for doc in corpus.documents() {
        counts[doc.len() / bucket_width] += 1;
    }
    Ok(Histogram {
        bucket_width,
        counts,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold_index: usize,
    pub train_doc_ids: BTreeSet<String>,
    pub test_doc_ids: BTreeSet<String>,
}

/// Shuffles document ids with `seed` and deals them round-robin into
/// `n_folds` test sets.
pub fn split_folds(corpus: &Corpus, n_folds: usize, seed: u64) -> Result<Vec<FoldSplit>, CorpusError> {
    if n_folds == 0 || n_folds > corpus.len() {
        return Err(CorpusError::InvalidArgument(format!(
            "cannot split {} documents into {n_folds} folds",
            corpus.len()
        )));
    }
    let mut ids: Vec<&str> = corpus.ids().collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut tests = vec![BTreeSet::new(); n_folds];
    for (position, id) in ids.iter().enumerate() {
        tests[position % n_folds].insert(id.to_string());
    }
    Ok(tests
        .into_iter()
        .enumerate()
        .map(|(fold_index, test_doc_ids)| FoldSplit {
            fold_index,
            train_doc_ids: corpus
                .ids()
                .filter(|id| !test_doc_ids.contains(*id))
                .map(str::to_string)
                .collect(),
            test_doc_ids,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc_of_len(id: &str, n: usize) -> Document {
        Document::from_sentences(
            id,
            (0..n).map(|_| vec![Token::new("x", BioTag::O)]).collect(),
        )
    }

    #[test]
    fn parse_splits_on_blank_lines() {
        let doc = Document::parse("a", "Ann\tB-PER\nran\tO\n\nShe\tO\n", Path::new("a.conll")).unwrap();
        assert_eq!(doc.len(), 2);
        assert_eq!(doc.sentences[1].doc_index, 1);
        assert_eq!(doc.sentences[0].tags(), vec![BioTag::B(EntityType::Per), BioTag::O]);
    }

    #[test]
    fn three_fields_is_a_parse_error_with_line() {
        let err = Document::parse("a", "Ann\tB-PER\nran\tO\tX\n", Path::new("a.conll")).unwrap_err();
        match err {
            CorpusError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(err_msg("a b\tO\n").contains("invalid token"));
    }

    fn err_msg(text: &str) -> String {
        Document::parse("a", text, Path::new("a.conll"))
            .unwrap_err()
            .to_string()
    }

    #[test]
    fn unknown_tag_and_empty_file_are_errors() {
        assert!(err_msg("Ann\tB-MISC\n").contains("unknown tag"));
        assert!(matches!(
            Document::parse("a", "\n\n", Path::new("a.conll")),
            Err(CorpusError::EmptyDocument(_))
        ));
    }

    #[test]
    fn conll_round_trip() {
        let text = "Ann\tB-PER\nLee\tI-PER\n\nran\tO\n";
        let doc = Document::parse("a", text, Path::new("a.conll")).unwrap();
        assert_eq!(doc.to_conll(), text);
    }

    #[test]
    fn duplicate_ids_rejected() {
        assert!(matches!(
            Corpus::new(vec![doc_of_len("a", 1), doc_of_len("a", 2)]),
            Err(CorpusError::DuplicateId(_))
        ));
    }

    #[test]
    fn counts_single_entity() {
        let doc = Document::from_sentences(
            "a",
            vec![vec![
                Token::new("Ann", BioTag::B(EntityType::Per)),
                Token::new("Lee", BioTag::I(EntityType::Per)),
                Token::new("ran", BioTag::O),
            ]],
        );
        let counts = entity_counts(&Corpus::new(vec![doc]).unwrap());
        assert_eq!(counts[&EntityType::Per], 1);
        assert_eq!(counts[&EntityType::Loc], 0);
        assert_eq!(counts[&EntityType::Org], 0);
    }

    #[test]
    fn histogram_of_lengths() {
        let corpus = Corpus::new(vec![doc_of_len("a", 10), doc_of_len("b", 12), doc_of_len("c", 30)]).unwrap();
        let h = length_histogram(&corpus, 10).unwrap();
        assert_eq!(h.non_empty(), BTreeMap::from([(10, 2), (30, 1)]));
        assert_eq!(h.total(), 3);
        assert_eq!(h.buckets().next(), Some((0, 10, 0)));

        let single = Corpus::new(vec![doc_of_len("a", 7)]).unwrap();
        assert_eq!(length_histogram(&single, 5).unwrap().non_empty().len(), 1);
        assert!(length_histogram(&single, 0).is_err());
    }

    #[test]
    fn folds_partition_and_are_deterministic() {
        let corpus = Corpus::new((0..40).map(|i| doc_of_len(&format!("d{i:02}"), 1)).collect()).unwrap();
        let folds = split_folds(&corpus, 5, 7).unwrap();
        assert_eq!(folds.len(), 5);
        for f in &folds {
            assert_eq!(f.test_doc_ids.len(), 8);
            assert_eq!(f.train_doc_ids.len(), 32);
            assert!(f.train_doc_ids.is_disjoint(&f.test_doc_ids));
        }
        assert_eq!(folds, split_folds(&corpus, 5, 7).unwrap());
        assert_ne!(folds, split_folds(&corpus, 5, 8).unwrap());

        let loo = split_folds(&corpus, 40, 1).unwrap();
        assert!(loo.iter().all(|f| f.test_doc_ids.len() == 1));
        assert!(split_folds(&corpus, 41, 1).is_err());
        assert!(split_folds(&corpus, 0, 1).is_err());
    }
}
