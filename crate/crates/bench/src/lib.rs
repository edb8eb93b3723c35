//! Deterministic inputs shared by the benchmarks.

use polyprompt_core::backend::Embedding;
use polyprompt_core::prompt::{parse_language_list, LanguageCode, ParallelText, SourceText};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn embedding(rng: &mut ChaCha8Rng, dim: usize) -> Embedding {
    let values = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    Embedding::new(values, "bench").expect("non-empty")
}

/// The first `n` of a fixed list of languages.
pub fn languages(n: usize) -> Vec<LanguageCode> {
    let all = parse_language_list("de,fr,zh,ja,ru,ko,es,it").expect("known codes");
    all[..n].to_vec()
}

pub fn parallel(n: usize) -> ParallelText {
    let source = SourceText::new("bench", "A red bicycle leaning against a brick wall.").expect("valid");
    let translations = languages(n)
        .into_iter()
        .map(|l| {
            let text = format!("«{}» A red bicycle leaning against a brick wall.", l.code());
            (l, text)
        })
        .collect();
    ParallelText::new(source, translations).expect("distinct languages")
}

/// `count` RGB buffers of `side`×`side` pixels in `[0, 1]`.
pub fn pixel_buffers(rng: &mut ChaCha8Rng, count: usize, side: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| (0..side * side * 3).map(|_| rng.random::<f64>()).collect())
        .collect()
}
