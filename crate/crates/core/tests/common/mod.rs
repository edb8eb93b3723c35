#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use polyprompt_core::backend::{BackendEndpoint, ImageParams, MockBackend, MockRegistry, ResponseCache, RetryPolicy};
use polyprompt_core::dataset::DatasetRecord;
use polyprompt_core::pipeline::{Clients, RunConfig};
use polyprompt_core::prompt::{
    parse_language_list, render_paraphrase, render_prompt, render_reduplication, variant_unrank, LanguageCode,
    ParallelText, SourceText, VariantStrategy,
};
use serde::Deserialize;

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

#[derive(Debug, Deserialize)]
pub struct GoldenCase {
    pub name: String,
    pub kind: String,
    pub text: String,
    #[serde(default)]
    pub translations: Vec<(String, String)>,
    #[serde(default)]
    pub order: Vec<String>,
    #[serde(default)]
    pub n: usize,
    #[serde(default)]
    pub paraphrases: Vec<String>,
}

impl GoldenCase {
    pub fn render(&self) -> String {
        let source = SourceText::new(self.name.clone(), self.text.clone()).unwrap();
        match self.kind.as_str() {
            "prompt" => {
                let translations = self
                    .translations
                    .iter()
                    .map(|(c, t)| (LanguageCode::from_code(c).unwrap(), t.clone()))
                    .collect();
                let parallel = ParallelText::new(source, translations).unwrap();
                let order: Vec<LanguageCode> = self.order.iter().map(|c| LanguageCode::from_code(c).unwrap()).collect();
                render_prompt(&parallel, &order).unwrap()
            }
            "reduplication" => render_reduplication(&source, self.n).unwrap(),
            "paraphrase" => render_paraphrase(&source, &self.paraphrases).unwrap(),
            other => panic!("unknown golden kind {other}"),
        }
    }

    pub fn expected(&self) -> Vec<u8> {
        std::fs::read(fixtures_dir().join("golden").join(format!("{}.txt", self.name))).unwrap()
    }
}

pub fn golden_cases() -> Vec<GoldenCase> {
    let text = std::fs::read_to_string(fixtures_dir().join("golden/cases.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

pub const CAPTIONS: [&str; 6] = [
    "A red bicycle leaning against a brick wall.",
    "Two dogs playing in the snow.",
    "A bowl of ramen with a boiled egg.",
    "A sailboat on a calm blue sea.",
    "An old man reading a newspaper on a bench.",
    "A kitchen with white cabinets and a window.",
];

pub fn records(n: usize) -> Vec<DatasetRecord> {
    (0..n)
        .map(|i| DatasetRecord::new(format!("s{i}"), CAPTIONS[i % CAPTIONS.len()]))
        .collect()
}

pub fn write_dataset(dir: &Path, records: &[DatasetRecord]) -> PathBuf {
    let path = dir.join("dataset.jsonl");
    std::fs::write(&path, polyprompt_core::dataset::to_jsonl(records)).unwrap();
    path
}

pub fn fast_endpoint(url: &str) -> BackendEndpoint {
    let mut e = BackendEndpoint::new(url);
    e.retry = RetryPolicy {
        max_attempts: 3,
        base_backoff_ms: 1,
        factor: 2.0,
    };
    e
}

/// A config routing every capability to the mock named `m`.
pub fn mock_config(dataset: &Path, out: &Path, languages: &str, seeds: &[u64]) -> RunConfig {
    let mut c = RunConfig::new(dataset, out);
    c.languages = parse_language_list(languages).unwrap();
    c.seeds = seeds.to_vec();
    c.variant_strategy = VariantStrategy::All;
    c.image = ImageParams { width: 64, height: 64 };
    c.endpoints.insert("m".into(), fast_endpoint("mock://m"));
    for slot in [
        &mut c.routing.translate,
        &mut c.routing.paraphrase,
        &mut c.routing.generate,
        &mut c.routing.embed,
        &mut c.routing.clip_i,
        &mut c.routing.dino,
        &mut c.routing.judge,
        &mut c.routing.reward,
        &mut c.routing.vqa,
    ] {
        *slot = Some("m".into());
    }
    c
}

pub fn clients(config: &RunConfig, registry: &MockRegistry) -> Clients {
    Clients::for_config(config, Arc::new(ResponseCache::in_memory()), registry).unwrap()
}

/// The prompt the pipeline builds for `caption` under multilingual variant
/// `rank`, given the mock translator's `«code» text` output.
pub fn mock_prompt(caption: &str, languages: &[LanguageCode], rank: u64) -> String {
    let order = variant_unrank(rank, languages).unwrap();
    let translations = order
        .iter()
        .map(|l| (l.clone(), format!("«{}» {caption}", l.code())))
        .collect();
    let parallel = ParallelText::new(SourceText::new("x", caption).unwrap(), translations).unwrap();
    render_prompt(&parallel, &order).unwrap()
}

/// A mock run with one planted best candidate per sample.
pub struct PlantedRun {
    pub root: tempfile::TempDir,
    pub dataset: PathBuf,
    pub records: Vec<DatasetRecord>,
    pub languages: Vec<LanguageCode>,
    pub seeds: Vec<u64>,
    /// `(sample_id, variant label, seed)` expected to be selected.
    pub planted: Vec<(String, String, u64)>,
}

impl PlantedRun {
    pub fn new(samples: usize, languages: &str, seeds: &[u64]) -> Self {
        let root = tempfile::tempdir().unwrap();
        let records = records(samples);
        let dataset = write_dataset(root.path(), &records);
        let languages = parse_language_list(languages).unwrap();
        let total = polyprompt_core::prompt::count_variants(languages.len()).unwrap();
        let planted = records
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let rank = (i as u64 * 7 + 3) % total;
                (r.id.clone(), rank.to_string(), seeds[i % seeds.len()])
            })
            .collect();
        Self {
            root,
            dataset,
            records,
            languages,
            seeds: seeds.to_vec(),
            planted,
        }
    }

    pub fn config(&self, out: &str) -> RunConfig {
        let codes: Vec<&str> = self.languages.iter().map(|l| l.code()).collect();
        mock_config(&self.dataset, &self.root.path().join(out), &codes.join(","), &self.seeds)
    }

    /// A fresh registry holding a fresh copy of the planted mock.
    pub fn registry(&self) -> (MockRegistry, Arc<MockBackend>) {
        let registry = MockRegistry::new();
        let mut mock = MockBackend::new();
        for (i, r) in self.records.iter().enumerate() {
            let (_, label, seed) = &self.planted[i];
            mock = mock.plant_best(mock_prompt(&r.text, &self.languages, label.parse().unwrap()), *seed);
        }
        let handle = registry.register("m", mock);
        (registry, handle)
    }
}
