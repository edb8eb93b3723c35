use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::metrics::{bvqa_score, correct_proportion, l1_diversity_png, mean};
use super::report::ReportTable;
use super::{EvalError, Metric};
use crate::backend::write_atomic;
use crate::pipeline::{CandidateRecord, Clients, RunManifest, SampleEntry};
use crate::rerank::cosine;

pub const REPORT_SCHEMA: u32 = 1;

/// Which images of a sample the per-image metrics look at.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// The reranked choice only.
    #[default]
    Selected,
    /// Every successfully generated candidate, averaged per sample.
    AllCandidates,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalOptions {
    pub metrics: Vec<Metric>,
    pub mode: EvalMode,
    pub workers: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            metrics: vec![Metric::ClipT],
            mode: EvalMode::Selected,
            workers: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: Metric,
    /// `None` when no sample produced a value.
    pub mean: Option<f64>,
    pub count: usize,
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleDetail {
    pub sample_id: String,
    /// `<variant>_<seed>` of every image that was scored.
    pub images: Vec<String>,
    pub values: BTreeMap<Metric, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub errors: BTreeMap<Metric, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: u32,
    pub config_digest: String,
    pub mode: EvalMode,
    pub samples: usize,
    /// Samples the run itself could not complete.
    pub failed_samples: usize,
    pub metrics: Vec<MetricSummary>,
    #[serde(skip)]
    pub details: Vec<SampleDetail>,
}

impl EvalReport {
    pub fn value(&self, metric: Metric) -> Option<f64> {
        self.metrics.iter().find(|s| s.metric == metric).and_then(|s| s.mean)
    }

    pub fn metric_list(&self) -> Vec<Metric> {
        self.metrics.iter().map(|s| s.metric).collect()
    }
}

/// Fails early when a requested metric cannot be computed at all.
pub fn check_requirements(manifest: &RunManifest, clients: &Clients, metrics: &[Metric]) -> Result<(), EvalError> {
    for &m in metrics {
        if let Some(cap) = m.capability() {
            if !clients.has(cap) {
                return Err(EvalError::MissingBackend {
                    metric: m,
                    capability: cap.name(),
                });
            }
        }
        if m.needs_reference() && manifest.samples.iter().all(|s| s.reference_image.is_none()) {
            return Err(EvalError::MissingReferences(m));
        }
        if m == Metric::Bvqa && manifest.samples.iter().all(|s| s.questions.is_empty()) {
            return Err(EvalError::NoQuestions);
        }
    }
    Ok(())
}

fn read(path: &Path) -> Result<Vec<u8>, EvalError> {
    std::fs::read(path).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn images_for<'a>(manifest: &'a RunManifest, sample: &'a SampleEntry, mode: EvalMode) -> Vec<&'a CandidateRecord> {
    match mode {
        EvalMode::Selected => manifest.selected_candidate(&sample.id).into_iter().collect(),
        EvalMode::AllCandidates => manifest.candidates_for(&sample.id).filter(|c| c.is_ok()).collect(),
    }
}

/// One metric for one image, or for the whole sample in the case of
/// diversity.
fn image_metric(
    metric: Metric,
    sample: &SampleEntry,
    png: &[u8],
    clients: &Clients,
) -> Result<f64, EvalError> {
    let client = |m: Metric| clients.get(m.capability().expect("metric has a backend"));
    match metric {
        Metric::ClipT => {
            let c = client(metric)?;
            Ok(cosine(&c.embed_text(&sample.text)?, &c.embed_png(png)?)?)
        }
        Metric::ClipI | Metric::Dino => {
            let reference = sample
                .reference_image
                .as_deref()
                .ok_or(EvalError::MissingReferences(metric))?;
            let reference = read(Path::new(reference))?;
            let c = client(metric)?;
            Ok(cosine(&c.embed_png(&reference)?, &c.embed_png(png)?)?)
        }
        Metric::Reward => Ok(client(metric)?.reward(&sample.text, png)?),
        Metric::CorrectProportion => {
            let verdict = client(metric)?.judge(&sample.text, png)?;
            correct_proportion(&[verdict])
        }
        Metric::Bvqa => {
            if sample.questions.is_empty() {
                return Err(EvalError::MissingQuestions);
            }
            let c = client(metric)?;
            let probabilities = sample
                .questions
                .iter()
                .map(|q| c.vqa(q, png))
                .collect::<Result<Vec<_>, _>>()?;
            bvqa_score(&probabilities)
        }
        Metric::L1Diversity => unreachable!("diversity is per sample"),
    }
}

fn evaluate_sample(
    run_dir: &Path,
    manifest: &RunManifest,
    sample: &SampleEntry,
    clients: &Clients,
    opts: &EvalOptions,
) -> SampleDetail {
    let mut detail = SampleDetail {
        sample_id: sample.id.clone(),
        images: Vec::new(),
        values: BTreeMap::new(),
        errors: BTreeMap::new(),
    };
    let chosen = images_for(manifest, sample, opts.mode);
    let loaded: Result<Vec<Vec<u8>>, EvalError> = chosen
        .iter()
        .map(|c| read(&run_dir.join(c.image_path.as_deref().unwrap_or_default())))
        .collect();
    detail.images = chosen.iter().map(|c| format!("{}_{}", c.variant, c.seed)).collect();

    for &metric in &opts.metrics {
        let result = if metric == Metric::L1Diversity {
            manifest
                .candidates_for(&sample.id)
                .filter(|c| c.is_ok())
                .map(|c| read(&run_dir.join(c.image_path.as_deref().unwrap_or_default())))
                .collect::<Result<Vec<_>, _>>()
                .and_then(|pngs| l1_diversity_png(&pngs.iter().map(Vec::as_slice).collect::<Vec<_>>()))
        } else {
            match &loaded {
                Ok(pngs) if pngs.is_empty() => Err(EvalError::NoValidSamples),
                Ok(pngs) => pngs
                    .iter()
                    .map(|png| image_metric(metric, sample, png, clients))
                    .collect::<Result<Vec<_>, _>>()
                    .and_then(|v| mean(&v)),
                Err(e) => Err(EvalError::Image(e.to_string())),
            }
        };
        match result {
            Ok(v) => {
                detail.values.insert(metric, v);
            }
            Err(e) => {
                let reason = match e {
                    EvalError::NoValidSamples => "no generated image".to_string(),
                    other => other.to_string(),
                };
                detail.errors.insert(metric, reason);
            }
        }
    }
    detail
}

/// Computes every requested metric over the run in `run_dir`. Samples that
/// cannot produce a metric are excluded from its mean and counted instead.
pub fn evaluate(
    run_dir: &Path,
    manifest: &RunManifest,
    clients: &Clients,
    opts: &EvalOptions,
) -> Result<EvalReport, EvalError> {
    check_requirements(manifest, clients, &opts.metrics)?;
    let slots: Mutex<Vec<Option<SampleDetail>>> = Mutex::new(vec![None; manifest.samples.len()]);
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..opts.workers.clamp(1, manifest.samples.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(sample) = manifest.samples.get(i) else { break };
                let detail = evaluate_sample(run_dir, manifest, sample, clients, opts);
                slots.lock().expect("eval poisoned")[i] = Some(detail);
            });
        }
    });
    let details: Vec<SampleDetail> = slots
        .into_inner()
        .expect("eval poisoned")
        .into_iter()
        .map(|d| d.expect("every sample evaluated"))
        .collect();

    let metrics = opts
        .metrics
        .iter()
        .map(|&metric| {
            let values: Vec<f64> = details.iter().filter_map(|d| d.values.get(&metric).copied()).collect();
            MetricSummary {
                metric,
                mean: mean(&values).ok(),
                count: values.len(),
                excluded: details.len() - values.len(),
            }
        })
        .collect();
    Ok(EvalReport {
        schema: REPORT_SCHEMA,
        config_digest: manifest.config_digest.clone(),
        mode: opts.mode,
        samples: manifest.samples.len(),
        failed_samples: manifest.failed_samples.len(),
        metrics,
        details,
    })
}

/// Writes `report.md`, `report.csv`, `report.json` and `details.jsonl` into
/// `dir`, labelling the single row `label`.
pub fn write_reports(dir: &Path, report: &EvalReport, label: &str) -> Result<(), EvalError> {
    let table = ReportTable::new(std::slice::from_ref(report), &[label.to_string()], &report.metric_list())?;
    let mut json = serde_json::to_string_pretty(report).expect("report serializes");
    json.push('\n');
    let details: String = report
        .details
        .iter()
        .map(|d| serde_json::to_string(d).expect("detail serializes") + "\n")
        .collect();
    for (name, body) in [
        ("report.md", table.to_markdown()),
        ("report.csv", table.to_csv()),
        ("report.json", json),
        ("details.jsonl", details),
    ] {
        let path = dir.join(name);
        write_atomic(&path, body.as_bytes()).map_err(|e| EvalError::Io {
            path,
            source: std::io::Error::other(e.to_string()),
        })?;
    }
    Ok(())
}
