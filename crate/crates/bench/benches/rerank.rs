use std::hint::black_box;

use criterion::{BenchmarkId, Criterion, Throughput};
use polyprompt_bench::{embedding, rng};
use polyprompt_core::rerank::{best_of_k_curve, cosine, select_best};

pub fn bench(c: &mut Criterion) {
    let mut r = rng(1);
    let mut group = c.benchmark_group("cosine");
    for dim in [64, 512, 1024] {
        let (u, v) = (embedding(&mut r, dim), embedding(&mut r, dim));
        group.throughput(Throughput::Elements(dim as u64));
        group.bench_with_input(BenchmarkId::from_parameter(dim), &dim, |b, _| {
            b.iter(|| cosine(black_box(&u), black_box(&v)).unwrap())
        });
    }
    group.finish();

    let mut group = c.benchmark_group("score_and_select");
    for k in [4, 16, 64] {
        let text = embedding(&mut r, 512);
        let images: Vec<_> = (0..k).map(|_| embedding(&mut r, 512)).collect();
        group.bench_with_input(BenchmarkId::from_parameter(k), &k, |b, _| {
            b.iter(|| {
                let scores: Vec<f64> = images.iter().map(|e| cosine(&text, e).unwrap()).collect();
                select_best(&scores).unwrap()
            })
        });
    }
    group.finish();

    let scores: Vec<f64> = (0..1956).map(|i| ((i * 37) % 101) as f64 / 101.0).collect();
    c.bench_function("best_of_k_curve_1956", |b| b.iter(|| best_of_k_curve(black_box(&scores)).unwrap()));
}
