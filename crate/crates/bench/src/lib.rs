//! Inputs shared by the benchmarks.

use ctxner::synthetic::{generate, SyntheticConfig};
use ctxner::{BioTag, Corpus, Document};

/// A synthetic corpus of `n_docs` documents with `sentences` sentences each.
pub fn corpus(n_docs: usize, sentences: usize) -> Corpus {
    generate(&SyntheticConfig {
        n_docs,
        sentences_per_doc: sentences,
        seed: 7,
        ..Default::default()
    })
    .expect("valid synthetic config")
}

/// One long document, for per-document index and retrieval costs.
pub fn long_document(sentences: usize) -> Document {
    corpus(1, sentences).documents()[0].clone()
}

/// Gold tags of every sentence, and a copy with every third entity tag dropped.
pub fn gold_and_noisy(corpus: &Corpus) -> (Vec<Vec<BioTag>>, Vec<Vec<BioTag>>) {
    let gold: Vec<Vec<BioTag>> = corpus.documents().iter().flat_map(|d| &d.sentences).map(|s| s.tags()).collect();
    let mut seen = 0;
    let noisy = gold
        .iter()
        .map(|s| {
            s.iter()
                .map(|&t| {
                    if t == BioTag::O {
                        return t;
                    }
                    seen += 1;
                    if seen % 3 == 0 {
                        BioTag::O
                    } else {
                        t
                    }
                })
                .collect()
        })
        .collect();
    (gold, noisy)
}
