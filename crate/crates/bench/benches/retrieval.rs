use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ctxner::retrieval::{retrieve, LexiconNounDetector};
use ctxner::tagger::{tag_with_context, train_memorizing};
use ctxner::{evaluate, Bm25Params, Heuristic, SentenceIndex};
use ctxner_bench::{corpus, gold_and_noisy, long_document};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

fn index_build(c: &mut Criterion) {
    let detector = LexiconNounDetector::default();
    let mut group = c.benchmark_group("index_build");
    for n in [200, 1000] {
        let doc = long_document(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &doc, |b, doc| {
            b.iter(|| SentenceIndex::build(black_box(doc), &detector, Bm25Params::default()))
        });
    }
    group.finish();
}

fn heuristics(c: &mut Criterion) {
    let doc = long_document(1000);
    let index = SentenceIndex::build(&doc, &LexiconNounDetector::default(), Bm25Params::default());
    let mut group = c.benchmark_group("retrieve_k8");
    for h in [Heuristic::Bm25, Heuristic::SameNoun, Heuristic::Surrounding] {
        group.bench_function(h.as_str(), |b| {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let mut target = 0;
            b.iter(|| {
                target = (target + 37) % doc.len();
                retrieve(&index, h, target, 8, 0, &mut rng).unwrap()
            })
        });
    }
    group.finish();
}

fn metrics(c: &mut Criterion) {
    let (gold, noisy) = gold_and_noisy(&corpus(20, 200));
    c.bench_function("evaluate_4000_sentences", |b| b.iter(|| evaluate(black_box(&gold), black_box(&noisy)).unwrap()));
}

fn tagging(c: &mut Criterion) {
    let train = corpus(20, 100);
    c.bench_function("train_memorizing_20_docs", |b| b.iter(|| train_memorizing(black_box(train.documents()))));

    let mut tagger = train_memorizing(train.documents());
    let doc = long_document(200);
    c.bench_function("tag_sentence_with_4_context", |b| {
        let mut target = 0;
        b.iter(|| {
            target = (target + 13) % 190;
            tag_with_context(&mut tagger, &doc, target, &[target + 2, target + 4, target + 6, target + 8]).unwrap()
        })
    });
}

criterion_group!(benches, index_build, heuristics, metrics, tagging);
criterion_main!(benches);
