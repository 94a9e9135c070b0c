//! Parallel vs sequential throughput on the three hot per-record kernels.
//!
//! `map_ordered` runs on the rayon pool under the default `parallel` feature;
//! `map_ordered_seq` is the always-sequential path. Built with
//! `--no-default-features` both arms measure the same sequential code, which
//! is still useful as a regression baseline for the kernels themselves.

use bitrepair::corpus::Corpus;
use bitrepair::exec;
use bitrepair::ppi::{extract_phrases, AlignedSentence};
use bitrepair::scoring::{mock_embedding, mock_qe_score};
use criterion::{criterion_group, criterion_main, Criterion, Throughput};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WORDS: [&str; 12] = [
    "inu", "neko", "tori", "sakana", "yama", "kawa", "sora", "umi", "hana", "ki", "tsuki", "hi",
];

fn random_sentence(rng: &mut ChaCha8Rng, len: usize) -> String {
    (0..len)
        .map(|_| WORDS[rng.gen_range(0..WORDS.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

fn synthetic_corpus(n: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Corpus::from_texts((0..n).map(|_| {
        let s_len = rng.gen_range(4..12);
        let t_len = rng.gen_range(4..12);
        (
            random_sentence(&mut rng, s_len),
            random_sentence(&mut rng, t_len),
        )
    }))
}

fn synthetic_alignments(n: usize, seed: u64) -> Vec<AlignedSentence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|id| {
            let s_len = rng.gen_range(4..10usize);
            let t_len = rng.gen_range(4..10usize);
            let links = (0..rng.gen_range(3..12usize))
                .map(|_| {
                    (
                        rng.gen_range(0..s_len) as u32,
                        rng.gen_range(0..t_len) as u32,
                    )
                })
                .collect();
            AlignedSentence::new(
                id as u64,
                (0..s_len).map(|_| WORDS[rng.gen_range(0..WORDS.len())].to_string()).collect(),
                (0..t_len).map(|_| WORDS[rng.gen_range(0..WORDS.len())].to_string()).collect(),
                links,
            )
            .unwrap()
        })
        .collect()
}

fn bench_qe_scoring(c: &mut Criterion) {
    let corpus = synthetic_corpus(50_000, 1);
    let mut group = c.benchmark_group("qe_scoring");
    group.throughput(Throughput::Elements(corpus.len() as u64));
    group.bench_function("parallel", |b| {
        b.iter(|| exec::map_ordered(corpus.pairs(), |p| mock_qe_score(&p.source, &p.target)))
    });
    group.bench_function("sequential", |b| {
        b.iter(|| exec::map_ordered_seq(corpus.pairs(), |p| mock_qe_score(&p.source, &p.target)))
    });
    group.finish();
}

fn bench_embedding(c: &mut Criterion) {
    let corpus = synthetic_corpus(4_000, 2);
    let mut group = c.benchmark_group("embedding");
    group.throughput(Throughput::Elements(corpus.len() as u64));
    group.sample_size(20);
    group.bench_function("parallel", |b| {
        b.iter(|| {
            exec::map_ordered(corpus.pairs(), |p| {
                (
                    mock_embedding(&p.source, 128, 0).unwrap(),
                    mock_embedding(&p.target, 128, 0).unwrap(),
                )
            })
        })
    });
    group.bench_function("sequential", |b| {
        b.iter(|| {
            exec::map_ordered_seq(corpus.pairs(), |p| {
                (
                    mock_embedding(&p.source, 128, 0).unwrap(),
                    mock_embedding(&p.target, 128, 0).unwrap(),
                )
            })
        })
    });
    group.finish();
}

fn bench_phrase_extraction(c: &mut Criterion) {
    let sentences = synthetic_alignments(20_000, 3);
    let mut group = c.benchmark_group("phrase_extraction");
    group.throughput(Throughput::Elements(sentences.len() as u64));
    group.bench_function("parallel", |b| {
        b.iter(|| exec::map_ordered(&sentences, |s| extract_phrases(s, 7)))
    });
    group.bench_function("sequential", |b| {
        b.iter(|| exec::map_ordered_seq(&sentences, |s| extract_phrases(s, 7)))
    });
    group.finish();
}

criterion_group!(benches, bench_qe_scoring, bench_embedding, bench_phrase_extraction);
criterion_main!(benches);
