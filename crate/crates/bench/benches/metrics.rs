use std::hint::black_box;

use criterion::{BenchmarkId, Criterion};
use polyprompt_bench::{pixel_buffers, rng};
use polyprompt_core::eval::{bvqa_score, l1_diversity};

pub fn bench(c: &mut Criterion) {
    let mut r = rng(2);
    let mut group = c.benchmark_group("l1_diversity_256px");
    group.sample_size(20);
    for count in [2, 4, 8] {
        let images = pixel_buffers(&mut r, count, 256);
        group.bench_with_input(BenchmarkId::from_parameter(count), &images, |b, images| {
            b.iter(|| l1_diversity(black_box(images)).unwrap())
        });
    }
    group.finish();

    let probabilities = [0.9, 0.7, 0.95, 0.5];
    c.bench_function("bvqa_score", |b| b.iter(|| bvqa_score(black_box(&probabilities)).unwrap()));
}
