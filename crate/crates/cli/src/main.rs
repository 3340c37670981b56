use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ctxner::corpus::{entity_counts, length_histogram, load_corpus, write_corpus, Token};
use ctxner::dataset_tools::{flag_all, load_character_lists};
use ctxner::experiment::{cell_seed, run_experiment, write_outputs, ExperimentConfig};
use ctxner::oracle::{distance_distribution, oracle_retrieve, OracleConfig, OracleDecision};
use ctxner::retrieval::{retrieve, LexiconNounDetector};
use ctxner::synthetic::{generate, SyntheticConfig};
use ctxner::tagger::{serve, tag_with_context, train_memorizing, DEFAULT_TIMEOUT};
use ctxner::{evaluate, Bm25Params, Corpus, Document, Heuristic, ProcessTagger, SentenceIndex, Tagger};
use log::info;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "ctxner", version, about = "Context retrieval experiments for literary NER")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inspect, check or generate corpora.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Score predicted tags against gold tags.
    Eval {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
    },
    /// Show the context sentences a heuristic picks for one sentence.
    Retrieve {
        corpus: PathBuf,
        #[arg(long)]
        doc: String,
        #[arg(long)]
        sentence: usize,
        #[arg(long)]
        heuristic: Heuristic,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        exclusion_radius: usize,
    },
    /// Rank candidate context sentences by how many tagging errors they fix.
    Oracle(OracleArgs),
    /// Tag a corpus, optionally with retrieved context.
    Tag(TagArgs),
    /// Run the full fold x run x setting x k grid.
    Experiment {
        corpus: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `workers` from the config.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Serve the built-in tagger over stdin/stdout.
    Serve {
        /// Corpus to train on.
        #[arg(long, alias = "model")]
        train: PathBuf,
    },
}

#[derive(Subcommand)]
enum DatasetCommand {
    /// Document, sentence and entity counts plus a length histogram.
    Stats {
        corpus: PathBuf,
        #[arg(long, default_value_t = 100)]
        bucket_width: usize,
    },
    /// Spans worth a second look, as CSV.
    Flags {
        corpus: PathBuf,
        #[arg(long)]
        charlists: PathBuf,
    },
    /// Write a synthetic corpus with ambiguous names.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        docs: usize,
        #[arg(long, default_value_t = 60)]
        sentences: usize,
        #[arg(long, default_value_t = 0)]
        min_cue_distance: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct TaggerArgs {
    /// `builtin` or a command speaking the JSON Lines protocol.
    #[arg(long, default_value = "builtin")]
    tagger: String,
    /// Passed to an external tagger as `--model`.
    #[arg(long)]
    model: Option<String>,
    /// Training corpus for the built-in tagger.
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_TIMEOUT.as_secs_f64())]
    timeout_secs: f64,
}

#[derive(Args)]
struct OracleArgs {
    corpus: PathBuf,
    #[arg(long, default_value = "bm25")]
    heuristic: Heuristic,
    #[arg(long, default_value_t = 16)]
    candidates: usize,
    #[arg(long, default_value_t = 1)]
    retain: usize,
    /// Keep candidates that do not reduce the error count.
    #[arg(long)]
    keep_non_positive: bool,
    #[arg(long, default_value_t = 0)]
    exclusion_radius: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Decisions as JSON Lines; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Retained-distance histogram as CSV.
    #[arg(long)]
    histogram: Option<PathBuf>,
    #[command(flatten)]
    tagger: TaggerArgs,
}

#[derive(Args)]
struct TagArgs {
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, requires = "k")]
    heuristic: Option<Heuristic>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    tagger: TaggerArgs,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Dataset(cmd) => dataset(cmd),
        Command::Eval { gold, pred } => eval(&gold, &pred),
        Command::Retrieve { corpus, doc, sentence, heuristic, k, seed, exclusion_radius } => {
            let corpus = load(&corpus)?;
            let doc = find_doc(&corpus, &doc)?;
            let index = SentenceIndex::build(doc, &LexiconNounDetector::default(), Bm25Params::default());
            let mut rng = ChaCha8Rng::seed_from_u64(cell_seed(seed, heuristic.as_str(), k, &doc.id, sentence));
            let found = retrieve(&index, heuristic, sentence, k, exclusion_radius, &mut rng)?;
            let mut out = io::stdout().lock();
            writeln!(out, "sentence\tdistance\tscore\ttext")?;
            for c in found {
                writeln!(out, "{}\t{}\t{:.6}\t{}", c.sentence_index, c.distance, c.score, text(doc, c.sentence_index))?;
            }
            Ok(())
        }
        Command::Oracle(args) => oracle(args),
        Command::Tag(args) => tag(args),
        Command::Experiment { corpus, config, out, workers } => {
            let corpus = load(&corpus)?;
            let mut config = match config {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                    ExperimentConfig::parse(&text)?
                }
                None => ExperimentConfig::default(),
            };
            if let Some(w) = workers {
                config.workers = w;
            }
            let output = run_experiment(&corpus, &config)?;
            write_outputs(&output, &out)?;
            info!(
                "{} rows, {} failed cells, outputs in {}",
                output.table.len(),
                output.failures.len(),
                out.display()
            );
            if !output.failures.is_empty() {
                bail!("{} cells failed; see failures.csv", output.failures.len());
            }
            Ok(())
        }
        Command::Serve { train } => {
            let corpus = load(&train)?;
            let mut tagger = train_memorizing(corpus.documents());
            let served = serve(&mut tagger, io::stdin().lock(), io::stdout().lock())?;
            info!("served {served} requests");
            Ok(())
        }
    }
}

fn load(dir: &Path) -> Result<Corpus> {
    load_corpus(dir).with_context(|| format!("loading corpus from {}", dir.display()))
}

fn find_doc<'c>(corpus: &'c Corpus, id: &str) -> Result<&'c Document> {
    corpus.get(id).with_context(|| format!("no document `{id}`"))
}

fn text(doc: &Document, sentence: usize) -> String {
    doc.sentences[sentence].texts().collect::<Vec<_>>().join(" ")
}

fn dataset(cmd: DatasetCommand) -> Result<()> {
    let mut out = io::stdout().lock();
    match cmd {
        DatasetCommand::Stats { corpus, bucket_width } => {
            let corpus = load(&corpus)?;
            let sentences: usize = corpus.documents().iter().map(Document::len).sum();
            let tokens: usize = corpus.documents().iter().flat_map(|d| &d.sentences).map(|s| s.len()).sum();
            writeln!(out, "documents\t{}", corpus.len())?;
            writeln!(out, "sentences\t{sentences}")?;
            writeln!(out, "tokens\t{tokens}")?;
            for (etype, n) in entity_counts(&corpus) {
                writeln!(out, "{etype}\t{n}")?;
            }
            writeln!(out, "\nsentences per document (bucket width {bucket_width})")?;
            for (lo, hi, n) in length_histogram(&corpus, bucket_width)?.buckets() {
                writeln!(out, "{lo}-{}\t{n}", hi - 1)?;
            }
        }
        DatasetCommand::Flags { corpus, charlists } => {
            let corpus = load(&corpus)?;
            let lists = load_character_lists(&charlists)?;
            let mut w = csv::Writer::from_writer(out);
            w.write_record(["doc", "sentence", "start", "end", "rule", "surface"])?;
            for f in flag_all(&corpus, &lists) {
                w.write_record([
                    f.doc_id,
                    f.sentence.to_string(),
                    f.start.to_string(),
                    f.end.to_string(),
                    f.rule.to_string(),
                    f.surface,
                ])?;
            }
            w.flush()?;
        }
        DatasetCommand::Synth { out: dir, docs, sentences, min_cue_distance, seed } => {
            let config = SyntheticConfig {
                n_docs: docs,
                sentences_per_doc: sentences,
                min_cue_distance,
                seed,
                ..Default::default()
            };
            let corpus = generate(&config)?;
            write_corpus(&corpus, &dir)?;
            writeln!(out, "wrote {} documents to {}", corpus.len(), dir.display())?;
        }
    }
    Ok(())
}

fn eval(gold: &Path, pred: &Path) -> Result<()> {
    let (gold, pred) = (load(gold)?, load(pred)?);
    let mut gold_tags = Vec::new();
    let mut pred_tags = Vec::new();
    for g in gold.documents() {
        let p = find_doc(&pred, &g.id).context("predictions are missing a document")?;
        if p.len() != g.len() {
            bail!("document `{}`: {} gold sentences, {} predicted", g.id, g.len(), p.len());
        }
        for (gs, ps) in g.sentences.iter().zip(&p.sentences) {
            gold_tags.push(gs.tags());
            pred_tags.push(ps.tags());
        }
    }
    let report = evaluate(&gold_tags, &pred_tags)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

/// Builds a tagger; the built-in one trains on `--train`, or on `fallback`
/// when no training corpus was given.
fn make_tagger<'a, I>(args: &TaggerArgs, fallback: I) -> Result<Box<dyn Tagger>>
where
    I: IntoIterator<Item = &'a Document>,
{
    if args.tagger == "builtin" {
        let tagger = match &args.train {
            Some(dir) => train_memorizing(load(dir)?.documents()),
            None => train_memorizing(fallback),
        };
        return Ok(Box::new(tagger));
    }
    let timeout = Duration::from_secs_f64(args.timeout_secs);
    Ok(Box::new(ProcessTagger::spawn(&args.tagger, args.model.as_deref(), timeout)?))
}

fn oracle(args: OracleArgs) -> Result<()> {
    let corpus = load(&args.corpus)?;
    let config = OracleConfig {
        candidate_count: args.candidates,
        retain: args.retain,
        positive_only: !args.keep_non_positive,
        exclusion_radius: args.exclusion_radius,
    };
    let mut sink: Box<dyn Write> = match &args.out {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    };
    let setting = format!("oracle-{}", args.heuristic);
    let detector = LexiconNounDetector::default();
    let mut shared = match (&args.tagger.tagger[..], &args.tagger.train) {
        ("builtin", None) => None,
        _ => Some(make_tagger(&args.tagger, [])?),
    };
    let mut decisions: Vec<OracleDecision> = Vec::new();
    for doc in corpus.documents() {
        // Without a training corpus the built-in tagger is trained on every
        // other document.
        let mut own = None;
        let tagger: &mut dyn Tagger = match shared.as_deref_mut() {
            Some(t) => t,
            None => own.insert(make_tagger(&args.tagger, corpus.documents().iter().filter(|d| d.id != doc.id))?),
        };
        let index = SentenceIndex::build(doc, &detector, Bm25Params::default());
        for (target, sentence) in doc.sentences.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(cell_seed(args.seed, &setting, 0, &doc.id, target));
            let gold = sentence.tags();
            let d = oracle_retrieve(tagger, doc, &index, target, args.heuristic, &config, &gold, &mut rng)?;
            writeln!(sink, "{}", serde_json::to_string(&d)?)?;
            decisions.push(d);
        }
    }
    sink.flush()?;
    if let Some(path) = args.histogram {
        let dist = distance_distribution(&decisions);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["distance", "count"])?;
        for (d, n) in &dist.counts {
            w.write_record([d.to_string(), n.to_string()])?;
        }
        w.flush()?;
        info!("local fraction {:.3} over {} retained sentences", dist.local_fraction(), dist.total());
    }
    Ok(())
}

fn tag(args: TagArgs) -> Result<()> {
    let corpus = load(&args.corpus)?;
    if args.tagger.tagger == "builtin" && args.tagger.train.is_none() {
        bail!("the built-in tagger needs --train");
    }
    let mut tagger = make_tagger(&args.tagger, [])?;
    let detector = LexiconNounDetector::default();
    let mut tagged = Vec::with_capacity(corpus.len());
    for doc in corpus.documents() {
        let index = SentenceIndex::build(doc, &detector, Bm25Params::default());
        let mut sentences = Vec::with_capacity(doc.len());
        for (target, sentence) in doc.sentences.iter().enumerate() {
            let context: Vec<usize> = match (args.heuristic, args.k) {
                (Some(h), Some(k)) => {
                    let mut rng = ChaCha8Rng::seed_from_u64(cell_seed(args.seed, h.as_str(), k, &doc.id, target));
                    retrieve(&index, h, target, k, 0, &mut rng)?.iter().map(|c| c.sentence_index).collect()
                }
                _ => Vec::new(),
            };
            let tags = tag_with_context(tagger.as_mut(), doc, target, &context)?;
            sentences.push(sentence.texts().zip(tags).map(|(w, t)| Token::new(w, t)).collect());
        }
        tagged.push(Document::from_sentences(doc.id.clone(), sentences));
    }
    write_corpus(&Corpus::new(tagged)?, &args.out)?;
    Ok(())
}
