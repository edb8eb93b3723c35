mod common;

use std::path::Path;

use common::{clients, mock_config, write_dataset, PlantedRun, CAPTIONS};
use polyprompt_core::backend::{MockBackend, MockRegistry};
use polyprompt_core::dataset::DatasetRecord;
use polyprompt_core::eval::{
    evaluate, normalize_png, write_reports, EvalError, EvalMode, EvalOptions, EvalReport, Metric,
};
use polyprompt_core::pipeline::{execute_run, plan_from_config, ExecuteOptions, RunConfig, RunManifest};

struct Evaluated {
    root: tempfile::TempDir,
    config: RunConfig,
    registry: MockRegistry,
    manifest: RunManifest,
}

impl Evaluated {
    fn run(records: Vec<DatasetRecord>, mock: MockBackend) -> Self {
        let root = tempfile::tempdir().unwrap();
        let dataset = write_dataset(root.path(), &records);
        let config = mock_config(&dataset, &root.path().join("run"), "de,fr", &[1, 2]);
        let registry = MockRegistry::new();
        registry.register("m", mock);
        let plan = plan_from_config(&config).unwrap();
        let manifest = execute_run(&plan, &clients(&config, &registry), ExecuteOptions::default()).unwrap();
        Self {
            root,
            config,
            registry,
            manifest,
        }
    }

    fn eval(&self, metrics: &[Metric], mode: EvalMode) -> Result<EvalReport, EvalError> {
        let opts = EvalOptions {
            metrics: metrics.to_vec(),
            mode,
            workers: 3,
        };
        evaluate(&self.config.output_dir, &self.manifest, &clients(&self.config, &self.registry), &opts)
    }

    fn image(&self, rel: &str) -> Vec<u8> {
        std::fs::read(self.config.output_dir.join(rel)).unwrap()
    }
}

fn record(id: &str, text: &str) -> DatasetRecord {
    DatasetRecord::new(id, text)
}

fn dot_cosine(u: &[f64], v: &[f64]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu: f64 = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    dot / (nu * nv)
}

#[test]
fn planted_selections_score_perfect_text_alignment() {
    let fx = PlantedRun::new(4, "de,fr", &[5, 6]);
    let (registry, _) = fx.registry();
    let config = fx.config("run");
    let plan = plan_from_config(&config).unwrap();
    let manifest = execute_run(&plan, &clients(&config, &registry), ExecuteOptions::default()).unwrap();
    let opts = EvalOptions::default();
    let report = evaluate(&config.output_dir, &manifest, &clients(&config, &registry), &opts).unwrap();
    assert!((report.value(Metric::ClipT).unwrap() - 1.0).abs() < 1e-9);
    assert_eq!(report.metrics[0].count, 4);
    assert_eq!(report.config_digest, manifest.config_digest);
}

#[test]
fn all_candidates_mode_matches_brute_force_average() {
    let records: Vec<_> = (0..3).map(|i| record(&format!("s{i}"), CAPTIONS[i])).collect();
    let fx = Evaluated::run(records.clone(), MockBackend::new());
    let report = fx.eval(&[Metric::ClipT], EvalMode::AllCandidates).unwrap();
    let oracle = MockBackend::new();
    let per_sample: Vec<f64> = records
        .iter()
        .map(|r| {
            let scores: Vec<f64> = fx
                .manifest
                .candidates_for(&r.id)
                .map(|c| {
                    let png = fx.image(c.image_path.as_deref().unwrap());
                    dot_cosine(&oracle.text_vector(&r.text), &oracle.image_vector(&png))
                })
                .collect();
            assert_eq!(scores.len(), 4 * 2);
            scores.iter().sum::<f64>() / scores.len() as f64
        })
        .collect();
    let expected = per_sample.iter().sum::<f64>() / per_sample.len() as f64;
    assert!((report.value(Metric::ClipT).unwrap() - expected).abs() < 1e-9);
    assert_eq!(report.mode, EvalMode::AllCandidates);
    assert!(report.details.iter().all(|d| d.images.len() == 8));

    let selected = fx.eval(&[Metric::ClipT], EvalMode::Selected).unwrap();
    assert!(selected.value(Metric::ClipT).unwrap() >= expected);
    assert!(selected.details.iter().all(|d| d.images.len() == 1));
}

#[test]
fn image_alignment_against_references() {
    let mut with_ref = record("s0", CAPTIONS[0]);
    with_ref.reference_image = Some("refs/s0.png".into());
    let fx = Evaluated::run(vec![with_ref, record("s1", CAPTIONS[1])], MockBackend::new());
    let chosen = fx.manifest.selected_candidate("s0").unwrap();
    let refs = fx.root.path().join("refs");
    std::fs::create_dir_all(&refs).unwrap();
    std::fs::write(refs.join("s0.png"), fx.image(chosen.image_path.as_deref().unwrap())).unwrap();

    let report = fx.eval(&[Metric::ClipI, Metric::Dino], EvalMode::Selected).unwrap();
    for m in [Metric::ClipI, Metric::Dino] {
        assert!((report.value(m).unwrap() - 1.0).abs() < 1e-9, "{m:?}");
        let summary = report.metrics.iter().find(|s| s.metric == m).unwrap();
        assert_eq!((summary.count, summary.excluded), (1, 1));
    }
}

#[test]
fn requirements_are_checked_before_scoring() {
    let mut fx = Evaluated::run(vec![record("s0", CAPTIONS[0])], MockBackend::new());
    assert!(matches!(
        fx.eval(&[Metric::ClipI], EvalMode::Selected),
        Err(EvalError::MissingReferences(Metric::ClipI))
    ));
    assert!(matches!(fx.eval(&[Metric::Bvqa], EvalMode::Selected), Err(EvalError::NoQuestions)));
    fx.config.routing.reward = None;
    assert!(matches!(
        fx.eval(&[Metric::ClipT, Metric::Reward], EvalMode::Selected),
        Err(EvalError::MissingBackend { metric: Metric::Reward, .. })
    ));
}

#[test]
fn judge_and_question_answering_scores() {
    let mut a = record("s0", CAPTIONS[0]);
    a.questions = vec!["is it red?".into(), "is it a bicycle?".into()];
    let mut b = record("s1", CAPTIONS[1]);
    b.questions = vec!["are there dogs?".into()];
    let c = record("s2", "A chair XFAIL in a room.");
    let d = record("s3", CAPTIONS[3]);
    let mock = MockBackend::new()
        .with_vqa_probability("is it red?", 0.5)
        .with_vqa_probability("is it a bicycle?", 0.5)
        .with_vqa_probability("are there dogs?", 1.0);
    let fx = Evaluated::run(vec![a, b, c, d], mock);
    let report = fx
        .eval(&[Metric::CorrectProportion, Metric::Bvqa, Metric::Reward], EvalMode::Selected)
        .unwrap();
    assert!((report.value(Metric::CorrectProportion).unwrap() - 0.75).abs() < 1e-12);
    assert!((report.value(Metric::Bvqa).unwrap() - 0.625).abs() < 1e-12);
    let bvqa = report.metrics.iter().find(|s| s.metric == Metric::Bvqa).unwrap();
    assert_eq!((bvqa.count, bvqa.excluded), (2, 2));
    let reward = report.value(Metric::Reward).unwrap();
    assert!((-2.0..=2.0).contains(&reward));
}

#[test]
fn diversity_over_all_generated_images() {
    let fx = Evaluated::run(vec![record("s0", CAPTIONS[0]), record("s1", CAPTIONS[2])], MockBackend::new());
    let report = fx.eval(&[Metric::L1Diversity], EvalMode::Selected).unwrap();
    let mut per_sample = Vec::new();
    for id in ["s0", "s1"] {
        let images: Vec<Vec<f64>> = fx
            .manifest
            .candidates_for(id)
            .map(|c| normalize_png(&fx.image(c.image_path.as_deref().unwrap())).unwrap())
            .collect();
        let mut total = 0.0;
        let mut pairs = 0.0;
        for i in 0..images.len() {
            for j in 0..images.len() {
                if i < j {
                    let diff: f64 = images[i].iter().zip(&images[j]).map(|(x, y)| (x - y).abs()).sum();
                    total += diff / images[i].len() as f64;
                    pairs += 1.0;
                }
            }
        }
        per_sample.push(total / pairs);
    }
    let expected = (per_sample[0] + per_sample[1]) / 2.0;
    let got = report.value(Metric::L1Diversity).unwrap();
    assert!(got > 0.0 && got < 1.0);
    assert!((got - expected).abs() < 1e-9);
}

#[test]
fn failed_samples_are_excluded_and_counted() {
    let fx = Evaluated::run(
        vec![record("s0", CAPTIONS[0]), record("s1", "XREFUSE a forbidden scene.")],
        MockBackend::new(),
    );
    assert_eq!(fx.manifest.failed_samples.len(), 1);
    let report = fx.eval(&[Metric::ClipT], EvalMode::Selected).unwrap();
    assert_eq!(report.failed_samples, 1);
    assert_eq!((report.metrics[0].count, report.metrics[0].excluded), (1, 1));
    let failed = report.details.iter().find(|d| d.sample_id == "s1").unwrap();
    assert!(failed.errors.contains_key(&Metric::ClipT));
}

#[test]
fn report_files_hold_only_requested_columns() {
    let fx = Evaluated::run(vec![record("s0", CAPTIONS[0]), record("s1", CAPTIONS[1])], MockBackend::new());
    let report = fx.eval(&[Metric::ClipT, Metric::Reward], EvalMode::Selected).unwrap();
    let out = fx.root.path().join("eval");
    std::fs::create_dir_all(&out).unwrap();
    write_reports(&out, &report, "pmt").unwrap();

    let read = |name: &str| std::fs::read_to_string(Path::new(&out).join(name)).unwrap();
    let csv = read("report.csv");
    assert_eq!(csv.lines().next().unwrap(), "system,clip_t,reward");
    assert!(csv.lines().nth(1).unwrap().starts_with("pmt,"));
    let md = read("report.md");
    assert!(md.contains("CLIP-T") && md.contains("Reward"));
    assert!(!md.contains("DINO") && !md.contains("B-VQA"));
    let json: serde_json::Value = serde_json::from_str(&read("report.json")).unwrap();
    assert_eq!(json["metrics"].as_array().unwrap().len(), 2);
    assert_eq!(read("details.jsonl").lines().count(), 2);
}
