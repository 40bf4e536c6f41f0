use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use pseudogen_bench::review_corpus;
use pseudogen_core::quality::{bleu4, em_f1, self_bleu};
use pseudogen_core::rng;
use pseudogen_core::tam::{featurize, FeatureConfig};

fn bench_bleu(c: &mut Criterion) {
    let corpus = review_corpus(1000, 9);
    let candidate = corpus[0].clone();
    let references: Vec<Vec<String>> = corpus[1..100].to_vec();
    c.bench_function("bleu4_99_refs", |b| {
        b.iter(|| black_box(bleu4(&candidate, &references).unwrap()))
    });
    c.bench_function("self_bleu_1000", |b| {
        b.iter_batched(
            || rng::stream(2, "bench-selfbleu", 0),
            |mut r| black_box(self_bleu(&corpus, 1000, &mut r).unwrap()),
            BatchSize::SmallInput,
        )
    });
}

fn bench_em_f1(c: &mut Criterion) {
    c.bench_function("em_f1", |b| {
        b.iter(|| {
            black_box(
                em_f1(
                    "The Battle of Hastings, 1066!",
                    &["battle of hastings", "Hastings 1066"],
                )
                .unwrap(),
            )
        })
    });
}

fn bench_featurize(c: &mut Criterion) {
    let config = FeatureConfig::default();
    let text = "splendid casting delights every scene beautifully and then some longer tail";
    c.bench_function("featurize_with_context", |b| {
        b.iter(|| black_box(featurize(text, Some("Moonveil"), &config)))
    });
}

criterion_group!(benches, bench_bleu, bench_em_f1, bench_featurize);
criterion_main!(benches);
