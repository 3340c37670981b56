//! Experiments on document-level context for named entity recognition.
//!
//! Documents are split into sentences; for every sentence a retrieval
//! heuristic picks other sentences of the same document as context, the
//! concatenation is tagged, and only the target sentence's tags are scored.
//!
//! - [`corpus`]: the `.conll` directory format, folds and statistics.
//! - [`metrics`]: entity decoding and exact-match precision/recall/F1.
//! - [`retrieval`]: the six heuristics and order-preserving context assembly.
//! - [`oracle`]: the error-delta re-ranker over retrieved candidates.
//! - [`tagger`]: the tagging interface, a built-in memorizing tagger and the
//!   JSON Lines adapter for external taggers.
//! - [`experiment`]: the heuristic × k × fold × run grid, CSV and plots.
//! - [`dataset_tools`]: annotation review flags.
//! - [`synthetic`]: generated corpora with ambiguous entity surfaces.

pub mod corpus;
pub mod dataset_tools;
pub mod experiment;
pub mod metrics;
pub mod oracle;
pub mod retrieval;
pub mod synthetic;
pub mod tagger;
pub mod tags;

pub use corpus::{Corpus, Document, FoldSplit, Sentence, Token};
pub use metrics::{evaluate, extract_entities, token_error_count, Entity, MetricsReport, Scores};
pub use oracle::{OracleConfig, OracleDecision};
pub use retrieval::{Bm25Params, Heuristic, RankedCandidate, SentenceIndex};
pub use tagger::{MemorizingTagger, ProcessTagger, TagRequest, TagResponse, Tagger};
pub use tags::{BioTag, EntityType};
