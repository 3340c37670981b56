//! The heuristic × k × fold × run grid.
//!
//! Folds are fixed by the configured seed; run `r` uses seed `seed + r` for
//! every random choice. Each (run, fold) pair is one job with its own tagger
//! session: the job tags every test sentence under every (setting, k) cell and
//! scores each cell over the whole test fold. A tagger failure fails only the
//! cell being computed; the session is restarted and the job carries on.

mod config;
mod plot;
mod results;

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{split_folds, Corpus, CorpusError, Document, FoldSplit};
use crate::metrics::evaluate;
use crate::oracle::{oracle_rank, select_retained, DistanceDistribution, OracleError, ScoredCandidate};
use crate::retrieval::{retrieve, Heuristic, LexiconNounDetector, SentenceIndex};
use crate::tagger::{tag_with_context, train_memorizing, ProcessTagger, TagRequest, TagResponse, Tagger, TaggerError};
use crate::tags::BioTag;

pub use config::{ExperimentConfig, Setting, TaggerSpec};
pub use plot::{emit_plot, series, Series};
pub use results::{
    aggregate, read_aggregates_csv, write_aggregates_csv, AggregateRow, MeanStd, Metric, ResultRow, ResultsTable,
    AGGREGATES_HEADER, RESULTS_HEADER,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Tagger(#[from] TaggerError),
    #[error("duplicate result for {heuristic} k={k} fold={fold} run={run}")]
    DuplicateRow {
        heuristic: String,
        k: usize,
        fold: usize,
        run: usize,
    },
    #[error("cannot aggregate an empty results table")]
    EmptyTable,
    #[error("csv: {0}")]
    Csv(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("plotting {path}: {message}")]
    Plot { path: PathBuf, message: String },
    #[error("worker pool: {0}")]
    Workers(String),
}

impl From<csv::Error> for ExperimentError {
    fn from(e: csv::Error) -> Self {
        ExperimentError::Csv(e.to_string())
    }
}

/// What a tagger factory gets to know about the job it serves.
#[derive(Debug, Clone)]
pub struct JobContext<'a> {
    pub run: usize,
    pub fold: usize,
    pub train: Vec<&'a Document>,
    /// `tagger_model` with placeholders filled in.
    pub model: Option<String>,
}

/// Creates the tagger session for one job; called again after a failure.
pub type TaggerFactory<'f> = dyn Fn(&JobContext<'_>) -> Result<Box<dyn Tagger>, TaggerError> + Sync + 'f;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub heuristic: String,
    pub k: usize,
    pub fold: usize,
    pub run: usize,
    pub message: String,
}

/// Which documents a job trained on and which it tagged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldLog {
    pub run: usize,
    pub fold: usize,
    pub train_doc_ids: Vec<String>,
    pub tagged_doc_ids: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentOutput {
    pub table: ResultsTable,
    pub failures: Vec<CellFailure>,
    /// Retained-context distances per (oracle setting, k), over all jobs.
    pub distances: BTreeMap<(String, usize), DistanceDistribution>,
    pub logs: Vec<FoldLog>,
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(s: &str) -> u64 {
    s.bytes()
        .fold(0xCBF2_9CE4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01B3))
}

/// Seed for the random choices of one sentence in one cell. Oracle candidate
/// pools use `k = 0` so that they do not depend on k.
pub fn cell_seed(run_seed: u64, setting: &str, k: usize, doc_id: &str, sentence: usize) -> u64 {
    [fnv1a(setting), k as u64, fnv1a(doc_id), sentence as u64]
        .into_iter()
        .fold(splitmix64(run_seed), |h, part| splitmix64(h ^ part))
}

/// Answers repeated requests from memory. Request ids encode the document,
/// target and context, so equal ids mean equal requests.
struct MemoTagger {
    inner: Box<dyn Tagger>,
    memo: HashMap<String, TagResponse>,
}

impl Tagger for MemoTagger {
    fn tag(&mut self, request: &TagRequest) -> Result<TagResponse, TaggerError> {
        if let Some(hit) = self.memo.get(&request.id) {
            return Ok(hit.clone());
        }
        let response = self.inner.tag(request)?;
        self.memo.insert(request.id.clone(), response.clone());
        Ok(response)
    }
}

struct CellError {
    message: String,
    tagger_failed: bool,
}

impl From<TaggerError> for CellError {
    fn from(e: TaggerError) -> Self {
        let tagger_failed = !matches!(e, TaggerError::Context(_));
        CellError {
            message: e.to_string(),
            tagger_failed,
        }
    }
}

impl From<OracleError> for CellError {
    fn from(e: OracleError) -> Self {
        CellError {
            tagger_failed: matches!(e, OracleError::Tagging { .. }),
            message: e.to_string(),
        }
    }
}

impl From<crate::retrieval::RetrievalError> for CellError {
    fn from(e: crate::retrieval::RetrievalError) -> Self {
        CellError {
            message: e.to_string(),
            tagger_failed: false,
        }
    }
}

struct JobOutput {
    rows: Vec<(usize, ResultRow)>,
    failures: Vec<(usize, CellFailure)>,
    distances: Vec<(usize, DistanceDistribution)>,
    log: FoldLog,
}

struct Job<'a> {
    corpus: &'a Corpus,
    config: &'a ExperimentConfig,
    cells: &'a [(Setting, usize)],
    run: usize,
    fold: &'a FoldSplit,
}

impl Job<'_> {
    fn docs(&self, ids: &std::collections::BTreeSet<String>) -> Vec<&Document> {
        ids.iter()
            .map(|id| self.corpus.get(id).expect("fold ids come from the corpus"))
            .collect()
    }

    fn run(&self, factory: &TaggerFactory<'_>) -> JobOutput {
        let fold = self.fold.fold_index;
        let test = self.docs(&self.fold.test_doc_ids);
        let context = JobContext {
            run: self.run,
            fold,
            train: self.docs(&self.fold.train_doc_ids),
            model: self.config.model_for(fold, self.run),
        };
        let n = self.cells.len();
        let mut failed: Vec<Option<String>> = vec![None; n];
        let mut preds: Vec<Vec<Vec<BioTag>>> = vec![Vec::new(); n];
        let mut distances = vec![DistanceDistribution::default(); n];
        let mut golds = Vec::new();

        match factory(&context) {
            Ok(inner) => {
                let mut tagger = MemoTagger {
                    inner,
                    memo: HashMap::new(),
                };
                'docs: for doc in &test {
                    let index = SentenceIndex::build(doc, &LexiconNounDetector::default(), self.config.bm25);
                    for target in 0..doc.len() {
                        let gold = doc.sentences[target].tags();
                        tagger.memo.clear();
                        let mut rankings: HashMap<Heuristic, Result<Vec<ScoredCandidate>, String>> = HashMap::new();
                        for (c, &(setting, k)) in self.cells.iter().enumerate() {
                            if failed[c].is_some() {
                                continue;
                            }
                            let outcome =
                                self.predict(&mut tagger, &mut rankings, doc, &index, target, &gold, setting, k);
                            match outcome {
                                Ok((tags, retained)) => {
                                    preds[c].push(tags);
                                    if matches!(setting, Setting::Oracle(_)) {
                                        retained.iter().for_each(|&j| distances[c].add(j as i64 - target as i64));
                                    }
                                }
                                Err(e) => {
                                    log::warn!(
                                        "{setting} k={k} fold={fold} run={}: {} (doc {} sentence {target})",
                                        self.run,
                                        e.message,
                                        doc.id
                                    );
                                    failed[c] = Some(e.message);
                                    if e.tagger_failed {
                                        match factory(&context) {
                                            Ok(fresh) => tagger.inner = fresh,
                                            Err(e) => {
                                                let message = format!("restarting tagger: {e}");
                                                failed.iter_mut().filter(|f| f.is_none()).for_each(|f| *f = Some(message.clone()));
                                                break 'docs;
                                            }
                                        }
                                    }
                                }
                            }
                        }
                        golds.push(gold);
                    }
                }
            }
            Err(e) => failed.iter_mut().for_each(|f| *f = Some(format!("starting tagger: {e}"))),
        }

        let mut out = JobOutput {
            rows: Vec::new(),
            failures: Vec::new(),
            distances: Vec::new(),
            log: FoldLog {
                run: self.run,
                fold,
                train_doc_ids: self.fold.train_doc_ids.iter().cloned().collect(),
                tagged_doc_ids: test.iter().map(|d| d.id.clone()).collect(),
            },
        };
        for (c, (&(setting, k), pred)) in self.cells.iter().zip(preds).enumerate() {
            let result = match failed[c].take() {
                Some(message) => Err(message),
                None => evaluate(&golds, &pred).map_err(|e| e.to_string()),
            };
            match result {
                Ok(report) => out.rows.push((c, ResultRow::new(setting.name(), k, fold, self.run, report.scores()))),
                Err(message) => out.failures.push((
                    c,
                    CellFailure {
                        heuristic: setting.name(),
                        k,
                        fold,
                        run: self.run,
                        message,
                    },
                )),
            }
        }
        out.distances = distances
            .into_iter()
            .enumerate()
            .filter(|(c, _)| matches!(self.cells[*c].0, Setting::Oracle(_)))
            .collect();
        out
    }

    /// Predicted target tags and the context sentences used.
    #[allow(clippy::too_many_arguments)]
    fn predict(
        &self,
        tagger: &mut MemoTagger,
        rankings: &mut HashMap<Heuristic, Result<Vec<ScoredCandidate>, String>>,
        doc: &Document,
        index: &SentenceIndex,
        target: usize,
        gold: &[BioTag],
        setting: Setting,
        k: usize,
    ) -> Result<(Vec<BioTag>, Vec<usize>), CellError> {
        let run_seed = self.config.run_seed(self.run);
        let context: Vec<usize> = match setting {
            Setting::None => Vec::new(),
            Setting::Heuristic(h) => {
                let mut rng = ChaCha8Rng::seed_from_u64(cell_seed(run_seed, &setting.name(), k, &doc.id, target));
                retrieve(index, h, target, k, 0, &mut rng)?
                    .iter()
                    .map(|c| c.sentence_index)
                    .collect()
            }
            Setting::Oracle(h) => {
                #[allow(clippy::map_entry)]
                if !rankings.contains_key(&h) {
                    let oracle = &self.config.oracle;
                    let mut rng = ChaCha8Rng::seed_from_u64(cell_seed(run_seed, &setting.name(), 0, &doc.id, target));
                    let ranked = retrieve(index, h, target, oracle.candidate_count, oracle.exclusion_radius, &mut rng)
                        .map_err(CellError::from)
                        .and_then(|candidates| Ok(oracle_rank(tagger, doc, target, &candidates, gold)?));
                    match ranked {
                        Ok(r) => rankings.insert(h, Ok(r)),
                        Err(e) => {
                            rankings.insert(h, Err(e.message.clone()));
                            return Err(e);
                        }
                    };
                }
                match &rankings[&h] {
                    Ok(ranked) => select_retained(ranked, k, self.config.oracle.positive_only),
                    Err(message) => {
                        return Err(CellError {
                            message: message.clone(),
                            tagger_failed: false,
                        })
                    }
                }
            }
        };
        let tags = tag_with_context(tagger, doc, target, &context)?;
        Ok((tags, context))
    }
}

/// Runs the grid with the tagger named in the configuration.
pub fn run_experiment(corpus: &Corpus, config: &ExperimentConfig) -> Result<ExperimentOutput, ExperimentError> {
    config.validate()?;
    match &config.tagger {
        TaggerSpec::Builtin => run_experiment_with(corpus, config, &|ctx: &JobContext<'_>| {
            Ok(Box::new(train_memorizing(ctx.train.iter().copied())) as Box<dyn Tagger>)
        }),
        TaggerSpec::Command(command) => {
            // Fail early when the command cannot even start.
            drop(ProcessTagger::spawn(command, config.model_for(0, 0).as_deref(), config.timeout)?);
            let timeout = config.timeout;
            run_experiment_with(corpus, config, &move |ctx: &JobContext<'_>| {
                Ok(Box::new(ProcessTagger::spawn(command, ctx.model.as_deref(), timeout)?) as Box<dyn Tagger>)
            })
        }
    }
}

/// Runs the grid with taggers made by `factory`.
pub fn run_experiment_with(
    corpus: &Corpus,
    config: &ExperimentConfig,
    factory: &TaggerFactory<'_>,
) -> Result<ExperimentOutput, ExperimentError> {
    config.validate()?;
    let folds = split_folds(corpus, config.n_folds, config.seed)?;
    let cells: Vec<(Setting, usize)> = config
        .settings
        .iter()
        .flat_map(|&s| config.k_values.iter().map(move |&k| (s, k)))
        .collect();
    let jobs: Vec<Job<'_>> = (0..config.n_runs)
        .flat_map(|run| folds.iter().map(move |fold| (run, fold)))
        .map(|(run, fold)| Job {
            corpus,
            config,
            cells: &cells,
            run,
            fold,
        })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| ExperimentError::Workers(e.to_string()))?;
    let outputs: Vec<JobOutput> = pool.install(|| jobs.par_iter().map(|job| job.run(factory)).collect());

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut output = ExperimentOutput::default();
    for job in outputs {
        rows.extend(job.rows);
        failures.extend(job.failures);
        for (c, dist) in job.distances {
            let (setting, k) = cells[c];
            let merged = output.distances.entry((setting.name(), k)).or_default();
            for (d, count) in dist.counts {
                *merged.counts.entry(d).or_default() += count;
            }
        }
        output.logs.push(job.log);
    }
    rows.sort_by_key(|(c, r)| (*c, r.fold, r.run));
    for (_, row) in rows {
        output.table.push(row)?;
    }
    failures.sort_by_key(|(c, f)| (*c, f.fold, f.run));
    output.failures = failures.into_iter().map(|(_, f)| f).collect();
    output.logs.sort_by_key(|l| (l.run, l.fold));
    Ok(output)
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, ExperimentError> {
    File::create(path).map(BufWriter::new).map_err(io_error(path))
}

/// Writes `results.csv`, `aggregates.csv`, one SVG per metric,
/// `distances.csv`, `failures.csv` and `folds.jsonl` into `dir`.
pub fn write_outputs(output: &ExperimentOutput, dir: &Path) -> Result<(), ExperimentError> {
    std::fs::create_dir_all(dir).map_err(io_error(dir))?;
    output.table.write_csv(create(&dir.join("results.csv"))?)?;

    let aggregates = if output.table.is_empty() {
        Vec::new()
    } else {
        aggregate(&output.table)?
    };
    write_aggregates_csv(&aggregates, create(&dir.join("aggregates.csv"))?)?;
    for metric in Metric::ALL {
        emit_plot(&aggregates, metric, &dir.join(format!("{}.svg", metric.as_str())))?;
    }

    let mut w = csv::Writer::from_writer(create(&dir.join("distances.csv"))?);
    w.write_record(["heuristic", "k", "distance", "count"])?;
    for ((heuristic, k), dist) in &output.distances {
        for (d, count) in &dist.counts {
            w.write_record([heuristic.clone(), k.to_string(), d.to_string(), count.to_string()])?;
        }
    }
    w.flush().map_err(io_error(&dir.join("distances.csv")))?;

    let path = dir.join("failures.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record(["heuristic", "k", "fold", "run", "message"])?;
    for f in &output.failures {
        w.write_record([f.heuristic.clone(), f.k.to_string(), f.fold.to_string(), f.run.to_string(), f.message.clone()])?;
    }
    w.flush().map_err(io_error(&path))?;

    let path = dir.join("folds.jsonl");
    let mut w = create(&path)?;
    for log in &output.logs {
        let line = serde_json::to_string(log).expect("fold log serializes");
        writeln!(w, "{line}").map_err(io_error(&path))?;
    }
    w.flush().map_err(io_error(&path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{generate, SyntheticConfig};

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            settings: vec![
                Setting::None,
                Setting::Heuristic(Heuristic::Random),
                Setting::Heuristic(Heuristic::SameNoun),
                Setting::Oracle(Heuristic::Bm25),
            ],
            k_values: vec![1, 2],
            n_folds: 3,
            n_runs: 2,
            seed: 5,
            workers: 2,
            ..Default::default()
        }
    }

    fn corpus() -> Corpus {
        generate(&SyntheticConfig {
            n_docs: 6,
            sentences_per_doc: 40,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn cell_seed_separates_inputs() {
        let base = cell_seed(1, "random", 2, "d", 3);
        assert_eq!(base, cell_seed(1, "random", 2, "d", 3));
        for other in [
            cell_seed(2, "random", 2, "d", 3),
            cell_seed(1, "samenoun", 2, "d", 3),
            cell_seed(1, "random", 1, "d", 3),
            cell_seed(1, "random", 2, "e", 3),
            cell_seed(1, "random", 2, "d", 4),
        ] {
            assert_ne!(base, other);
        }
    }

    #[test]
    fn grid_is_complete_and_deterministic() {
        let c = corpus();
        let config = small_config();
        let a = run_experiment(&c, &config).unwrap();
        assert_eq!(a.table.len(), 4 * 2 * 3 * 2);
        assert!(a.failures.is_empty());
        let b = run_experiment(&c, &ExperimentConfig { workers: 1, ..config }).unwrap();
        assert_eq!(a.table.to_csv_string(), b.table.to_csv_string());
        assert_eq!(a.distances, b.distances);
    }

    #[test]
    fn baseline_rows_are_identical_across_k() {
        let out = run_experiment(&corpus(), &small_config()).unwrap();
        for run in 0..2 {
            for fold in 0..3 {
                let one = out.table.get("none", 1, fold, run).unwrap();
                let two = out.table.get("none", 2, fold, run).unwrap();
                assert_eq!((one.precision, one.recall, one.f1), (two.precision, two.recall, two.f1));
            }
        }
    }

    #[test]
    fn no_test_document_is_trained_on() {
        let out = run_experiment(&corpus(), &small_config()).unwrap();
        assert_eq!(out.logs.len(), 6);
        for log in &out.logs {
            assert!(!log.tagged_doc_ids.is_empty());
            assert!(log.tagged_doc_ids.iter().all(|id| !log.train_doc_ids.contains(id)));
        }
    }

    struct Flaky {
        calls: usize,
        fail_at: usize,
    }

    impl Tagger for Flaky {
        fn tag(&mut self, request: &TagRequest) -> Result<TagResponse, TaggerError> {
            self.calls += 1;
            if self.calls == self.fail_at {
                return Err(TaggerError::Exited);
            }
            Ok(TagResponse {
                id: request.id.clone(),
                tags: vec![BioTag::O; request.tokens.len()],
            })
        }
    }

    #[test]
    fn a_tagger_crash_fails_one_cell_and_the_rest_proceed() {
        let c = corpus();
        let config = ExperimentConfig {
            n_runs: 1,
            ..small_config()
        };
        let factory = |ctx: &JobContext<'_>| -> Result<Box<dyn Tagger>, TaggerError> {
            // Only the first session of fold 1 crashes, on its third call.
            static STARTED: std::sync::atomic::AtomicBool = std::sync::atomic::AtomicBool::new(false);
            let first = ctx.fold == 1 && !STARTED.swap(true, std::sync::atomic::Ordering::SeqCst);
            Ok(Box::new(Flaky {
                calls: 0,
                fail_at: if first { 3 } else { usize::MAX },
            }))
        };
        let out = run_experiment_with(&c, &config, &factory).unwrap();
        assert_eq!(out.failures.len(), 1);
        assert_eq!(out.failures[0].fold, 1);
        assert_eq!(out.table.len() + out.failures.len(), 4 * 2 * 3);
        let f = &out.failures[0];
        assert!(out.table.get(&f.heuristic, f.k, f.fold, f.run).is_none());
    }

    #[test]
    fn tagger_that_cannot_start_fails_its_cells() {
        let config = ExperimentConfig {
            n_runs: 1,
            ..small_config()
        };
        let factory = |ctx: &JobContext<'_>| -> Result<Box<dyn Tagger>, TaggerError> {
            if ctx.fold == 0 {
                Err(TaggerError::BadCommand("x".into()))
            } else {
                Ok(Box::new(train_memorizing(ctx.train.iter().copied())))
            }
        };
        let out = run_experiment_with(&corpus(), &config, &factory).unwrap();
        assert_eq!(out.failures.len(), 8);
        assert_eq!(out.table.len(), 16);
    }

    #[test]
    fn oracle_retained_never_exceeds_k() {
        let out = run_experiment(&corpus(), &small_config()).unwrap();
        let one = &out.distances[&("oracle-bm25".to_string(), 1)];
        let two = &out.distances[&("oracle-bm25".to_string(), 2)];
        assert!(one.total() <= two.total());
        assert!(one.total() > 0);
    }

    #[test]
    fn outputs_are_written() {
        let out = run_experiment(&corpus(), &small_config()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_outputs(&out, dir.path()).unwrap();
        for name in ["results.csv", "aggregates.csv", "f1.svg", "precision.svg", "recall.svg", "distances.csv", "folds.jsonl", "failures.csv"] {
            assert!(dir.path().join(name).exists(), "{name}");
        }
        let text = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
        assert_eq!(ResultsTable::read_csv(text.as_bytes()).unwrap(), out.table);
    }
}
