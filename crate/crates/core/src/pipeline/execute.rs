use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use super::checkpoint::{Checkpoint, CheckpointEntry};
use super::manifest::{
    CandidateRecord, CandidateStatus, FailedSample, RunManifest, RunSummary, SampleEntry, Timing, MANIFEST_SCHEMA,
    TOOL_VERSION,
};
use super::plan::{check_clients, plan_from_config, GenerationItem, RunPlan, VariantKind};
use super::{Capability, Clients, PipelineError, RunConfig};
use crate::backend::{sha256_hex, write_atomic};
use crate::prompt::{render_paraphrase, render_prompt, render_reduplication, render_single_language, LanguageCode};
use crate::rerank::{rerank_candidates, CandidateRef, RerankError, Selection};

pub const CONFIG_FILE: &str = "config.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const IMAGES_DIR: &str = "images";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecuteOptions {
    /// Concurrent work items; endpoint in-flight limits still apply.
    pub workers: usize,
    /// Abort on the first backend failure instead of recording it.
    pub fail_fast: bool,
    /// Stop with [`PipelineError::Interrupted`] after this many new
    /// generation items. Used to exercise resume.
    pub stop_after: Option<usize>,
}

impl Default for ExecuteOptions {
    fn default() -> Self {
        Self {
            workers: 4,
            fail_fast: false,
            stop_after: None,
        }
    }
}

type CandidateKey = (String, String, u64);

/// Everything recovered from a checkpoint plus what this invocation adds.
#[derive(Default)]
struct State {
    translations: HashMap<(String, String), String>,
    paraphrases: HashMap<String, Vec<String>>,
    candidates: HashMap<CandidateKey, CandidateRecord>,
    selections: HashMap<String, Selection>,
    failed: BTreeMap<String, String>,
}

impl State {
    fn absorb(&mut self, entry: CheckpointEntry) {
        match entry {
            CheckpointEntry::Header { .. } => {}
            CheckpointEntry::Translation {
                sample_id,
                language,
                text,
            } => {
                self.translations.insert((sample_id, language), text);
            }
            CheckpointEntry::Paraphrase { sample_id, texts } => {
                self.paraphrases.insert(sample_id, texts);
            }
            CheckpointEntry::Candidate(c) => {
                self.candidates
                    .insert((c.sample_id.clone(), c.variant.clone(), c.seed), c);
            }
            CheckpointEntry::Selection(s) => {
                self.selections.insert(s.sample_id.clone(), s);
            }
            CheckpointEntry::SampleFailed { sample_id, reason } => {
                self.failed.entry(sample_id).or_insert(reason);
            }
        }
    }
}

/// Recording sink shared by worker threads: appends to the checkpoint and
/// updates the in-memory state under one lock.
struct Recorder<'a> {
    checkpoint: &'a Checkpoint,
    state: Mutex<State>,
}

impl Recorder<'_> {
    fn record(&self, entry: CheckpointEntry) -> Result<(), PipelineError> {
        let mut state = self.state.lock().expect("state poisoned");
        self.checkpoint.append(&entry)?;
        state.absorb(entry);
        Ok(())
    }

    fn with<R>(&self, f: impl FnOnce(&State) -> R) -> R {
        f(&self.state.lock().expect("state poisoned"))
    }
}

/// Maps an arbitrary sample id onto a single safe path component. Ids that
/// need rewriting get a short digest suffix so distinct ids stay distinct.
pub fn sanitize_path_component(id: &str) -> String {
    let clean: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect();
    if clean == id && !clean.is_empty() && clean != "." && clean != ".." {
        clean
    } else {
        format!("{clean}-{}", &sha256_hex(id.as_bytes())[..8])
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    write_atomic(path, bytes).map_err(|e| PipelineError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    })
}

/// Runs `f` over `items` on up to `workers` threads. `f` returns `false` to
/// ask every worker to stop; the first error wins and also stops the pool.
pub(super) fn run_pool<T: Sync>(
    items: &[T],
    workers: usize,
    f: impl Fn(&T) -> Result<bool, PipelineError> + Sync,
) -> Result<(), PipelineError> {
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let error: Mutex<Option<PipelineError>> = Mutex::new(None);
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, items.len().max(1)) {
            s.spawn(|| {
                while !stop.load(Ordering::SeqCst) {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(item) = items.get(i) else { break };
                    match f(item) {
                        Ok(true) => {}
                        Ok(false) => stop.store(true, Ordering::SeqCst),
                        Err(e) => {
                            stop.store(true, Ordering::SeqCst);
                            error.lock().expect("pool poisoned").get_or_insert(e);
                        }
                    }
                }
            });
        }
    });
    match error.into_inner().expect("pool poisoned") {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn timing_since(started_at: chrono::DateTime<chrono::Utc>, clock: Instant) -> Timing {
    Timing {
        started_at: started_at.to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
        elapsed_ms: clock.elapsed().as_millis() as u64,
    }
}

/// Builds the prompt for one (sample, variant) pair from the record's own
/// translations plus those fetched during this run.
fn render_for(plan: &RunPlan, state: &State, item: &GenerationItem) -> Result<String, PipelineError> {
    let record = &plan.records[item.sample_index];
    let variant = plan.variant(item);
    let with_translations = |langs: &[LanguageCode]| {
        let mut r = record.clone();
        for l in langs {
            if let Some(t) = state.translations.get(&(record.id.clone(), l.code().to_string())) {
                r.translations.entry(l.code().to_string()).or_insert_with(|| t.clone());
            }
        }
        r.parallel(langs)
    };
    let prompt = match &variant.kind {
        VariantKind::Multilingual { order } => render_prompt(&with_translations(order)?, order)?,
        VariantKind::EnglishOnly => render_prompt(&with_translations(&[])?, &[])?,
        VariantKind::SingleLanguage { language } => {
            let langs = std::slice::from_ref(language);
            render_single_language(&with_translations(langs)?, language)?
        }
        VariantKind::Reduplication { n } => render_reduplication(&record.source()?, *n)?,
        VariantKind::Paraphrase { .. } => {
            let texts = state.paraphrases.get(&record.id).ok_or_else(|| {
                PipelineError::Config(format!("no paraphrases recorded for sample {:?}", record.id))
            })?;
            render_paraphrase(&record.source()?, texts)?
        }
    };
    Ok(prompt)
}

fn sample_failure(
    recorder: &Recorder,
    fail_fast: bool,
    sample_id: &str,
    err: PipelineError,
) -> Result<bool, PipelineError> {
    if fail_fast {
        return Err(err);
    }
    log::warn!("sample {sample_id:?} failed: {err}");
    recorder.record(CheckpointEntry::SampleFailed {
        sample_id: sample_id.to_string(),
        reason: err.to_string(),
    })?;
    Ok(true)
}

/// Executes `plan`, resuming from any checkpoint already in its output
/// directory. If a manifest with the same config digest already exists the
/// run is complete and that manifest is returned untouched.
pub fn execute_run(plan: &RunPlan, clients: &Clients, opts: ExecuteOptions) -> Result<RunManifest, PipelineError> {
    let out = plan.config.output_dir.clone();
    std::fs::create_dir_all(&out).map_err(io_err(&out))?;
    let manifest_path = out.join(MANIFEST_FILE);
    if manifest_path.exists() {
        let existing = RunManifest::load(&manifest_path)?;
        if existing.config_digest != plan.config_digest {
            return Err(PipelineError::DigestMismatch {
                expected: existing.config_digest,
                found: plan.config_digest.clone(),
            });
        }
        log::info!("{} already complete", out.display());
        return Ok(existing);
    }
    check_clients(plan, clients)?;

    let (checkpoint, prior) = Checkpoint::open(&out.join(CHECKPOINT_FILE), &plan.config_digest)?;
    let mut config_json = serde_json::to_string_pretty(&plan.config).expect("config serializes");
    config_json.push('\n');
    write_file(&out.join(CONFIG_FILE), config_json.as_bytes())?;

    let mut state = State::default();
    let resumed = prior.len();
    for entry in prior {
        state.absorb(entry);
    }
    if resumed > 0 {
        log::info!("resuming {} with {resumed} checkpointed item(s)", out.display());
    }
    let recorder = Recorder {
        checkpoint: &checkpoint,
        state: Mutex::new(state),
    };
    let is_failed = |id: &str| recorder.with(|s| s.failed.contains_key(id));

    // Phase 1: translations.
    let pending: Vec<_> = recorder.with(|s| {
        plan.translations
            .iter()
            .filter(|t| !s.translations.contains_key(&(t.sample_id.clone(), t.language.code().to_string())))
            .cloned()
            .collect()
    });
    run_pool(&pending, opts.workers, |t| {
        if is_failed(&t.sample_id) {
            return Ok(true);
        }
        let record = &plan.records[t.sample_index];
        let result = clients
            .translator(&t.language)
            .and_then(|c| c.translate(&record.text, &LanguageCode::english(), &t.language));
        match result {
            Ok(text) => recorder.record(CheckpointEntry::Translation {
                sample_id: t.sample_id.clone(),
                language: t.language.code().to_string(),
                text,
            })
            .map(|_| true),
            Err(e) => sample_failure(&recorder, opts.fail_fast, &t.sample_id, e.into()),
        }
    })?;

    // Phase 2: paraphrases for the paraphrase ablation.
    let pending: Vec<usize> = recorder.with(|s| {
        plan.paraphrases
            .iter()
            .copied()
            .filter(|&i| !s.paraphrases.contains_key(&plan.records[i].id))
            .collect()
    });
    run_pool(&pending, opts.workers, |&i| {
        let record = &plan.records[i];
        if is_failed(&record.id) {
            return Ok(true);
        }
        let result = clients
            .get(Capability::Paraphrase)
            .and_then(|c| c.paraphrase(&record.text, plan.config.ablation_count()));
        match result {
            Ok(texts) => recorder.record(CheckpointEntry::Paraphrase {
                sample_id: record.id.clone(),
                texts,
            })
            .map(|_| true),
            Err(e) => sample_failure(&recorder, opts.fail_fast, &record.id, e.into()),
        }
    })?;

    // Phase 3: generation.
    let generator = clients.get(Capability::Generate)?;
    let pending: Vec<&GenerationItem> = recorder.with(|s| {
        plan.generations
            .iter()
            .filter(|g| {
                !s.failed.contains_key(&g.sample_id)
                    && !s
                        .candidates
                        .contains_key(&(g.sample_id.clone(), plan.variant(g).label.clone(), g.seed))
            })
            .collect()
    });
    let executed = AtomicUsize::new(0);
    let interrupted = AtomicBool::new(false);
    run_pool(&pending, opts.workers, |g| {
        if let Some(limit) = opts.stop_after {
            if executed.fetch_add(1, Ordering::SeqCst) >= limit {
                interrupted.store(true, Ordering::SeqCst);
                return Ok(false);
            }
        }
        let variant = plan.variant(g);
        let prompt = match recorder.with(|s| render_for(plan, s, g)) {
            Ok(p) => p,
            Err(e) => return sample_failure(&recorder, opts.fail_fast, &g.sample_id, e),
        };
        let started_at = chrono::Utc::now();
        let clock = Instant::now();
        let mut record = CandidateRecord {
            sample_id: g.sample_id.clone(),
            variant: variant.label.clone(),
            rank: variant.rank,
            prompt,
            seed: g.seed,
            status: CandidateStatus::Ok,
            image_path: None,
            width: None,
            height: None,
            backend_id: generator.model_key().to_string(),
            error: None,
            timing: None,
        };
        match generator.generate_image(&record.prompt, g.seed, plan.config.image) {
            Ok(image) => {
                let rel = format!(
                    "{IMAGES_DIR}/{}/{}_{}.png",
                    sanitize_path_component(&g.sample_id),
                    variant.label,
                    g.seed
                );
                write_file(&out.join(&rel), &image.png_bytes)?;
                record.image_path = Some(rel);
                record.width = Some(image.width);
                record.height = Some(image.height);
                record.backend_id = image.backend_id;
            }
            Err(e) if opts.fail_fast => return Err(e.into()),
            Err(e) => {
                log::warn!("{}/{}_{} failed: {e}", g.sample_id, variant.label, g.seed);
                record.status = CandidateStatus::Failed;
                record.error = Some(e.to_string());
            }
        }
        record.timing = Some(timing_since(started_at, clock));
        recorder.record(CheckpointEntry::Candidate(record))?;
        Ok(true)
    })?;
    if interrupted.load(Ordering::SeqCst) {
        return Err(PipelineError::Interrupted {
            completed: opts.stop_after.unwrap_or(0),
        });
    }

    // Phase 4: per-sample reranking against the original English caption.
    let reranker = clients.get(Capability::Rerank)?;
    let pending: Vec<usize> = recorder.with(|s| {
        (0..plan.records.len())
            .filter(|&i| {
                let id = &plan.records[i].id;
                !s.failed.contains_key(id) && !s.selections.contains_key(id)
            })
            .collect()
    });
    run_pool(&pending, opts.workers, |&i| {
        let record = &plan.records[i];
        let ok: Vec<CandidateRecord> = recorder.with(|s| {
            plan.generations
                .iter()
                .filter(|g| g.sample_index == i)
                .filter_map(|g| {
                    s.candidates
                        .get(&(g.sample_id.clone(), plan.variant(g).label.clone(), g.seed))
                })
                .filter(|c| c.is_ok())
                .cloned()
                .collect()
        });
        if ok.is_empty() {
            return sample_failure(
                &recorder,
                false,
                &record.id,
                PipelineError::Rerank(RerankError::Empty),
            )
            .map(|_| true);
        }
        let mut images = Vec::with_capacity(ok.len());
        for c in &ok {
            let path = out.join(c.image_path.as_deref().expect("ok candidate has an image"));
            let bytes = std::fs::read(&path).map_err(io_err(&path))?;
            let candidate = CandidateRef {
                sample_id: c.sample_id.clone(),
                variant: c.variant.clone(),
                seed: c.seed,
            };
            images.push((candidate, bytes));
        }
        match rerank_candidates(&record.source()?, &images, &reranker) {
            Ok(selection) => recorder.record(CheckpointEntry::Selection(selection)).map(|_| true),
            Err(e) => sample_failure(&recorder, opts.fail_fast, &record.id, e.into()),
        }
    })?;

    let state = recorder.state.into_inner().expect("state poisoned");
    let manifest = build_manifest(plan, &state);
    manifest.save(&manifest_path)?;
    Ok(manifest)
}

fn build_manifest(plan: &RunPlan, state: &State) -> RunManifest {
    let dataset_dir = plan.config.dataset_dir();
    let samples: Vec<SampleEntry> = plan
        .records
        .iter()
        .map(|r| SampleEntry {
            id: r.id.clone(),
            text: r.text.clone(),
            reference_image: r.reference_path(dataset_dir).map(|p| p.to_string_lossy().into_owned()),
            questions: r.questions.clone(),
        })
        .collect();
    let mut seen = HashSet::new();
    let candidates: Vec<CandidateRecord> = plan
        .generations
        .iter()
        .filter_map(|g| {
            let key = (g.sample_id.clone(), plan.variant(g).label.clone(), g.seed);
            state.candidates.get(&key).filter(|_| seen.insert(key.clone())).cloned()
        })
        .collect();
    let selections: Vec<Selection> = plan
        .records
        .iter()
        .filter_map(|r| state.selections.get(&r.id).cloned())
        .collect();
    let failed_samples: Vec<FailedSample> = plan
        .records
        .iter()
        .filter_map(|r| {
            state.failed.get(&r.id).map(|reason| FailedSample {
                sample_id: r.id.clone(),
                reason: reason.clone(),
            })
        })
        .collect();
    let summary = RunSummary {
        samples: samples.len(),
        candidates: candidates.len(),
        failed_candidates: candidates.iter().filter(|c| !c.is_ok()).count(),
        selections: selections.len(),
        failed_samples: failed_samples.len(),
    };
    RunManifest {
        schema: MANIFEST_SCHEMA,
        tool_version: TOOL_VERSION.to_string(),
        config_digest: plan.config_digest.clone(),
        dataset: plan.config.dataset.to_string_lossy().into_owned(),
        dataset_sample: plan.config.sample,
        samples,
        candidates,
        selections,
        failed_samples,
        summary,
        finished_at: Some(chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)),
    }
}

/// Reads the `config.json` a run directory was started with, pointing its
/// `output_dir` back at `dir`.
pub fn load_run_config(dir: &Path) -> Result<RunConfig, PipelineError> {
    let path = dir.join(CONFIG_FILE);
    if !path.exists() {
        return Err(PipelineError::MissingCheckpoint(dir.to_path_buf()));
    }
    let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
    let mut config: RunConfig =
        serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
    config.output_dir = PathBuf::from(dir);
    Ok(config)
}

fn ensure_resumable(dir: &Path) -> Result<(), PipelineError> {
    if dir.join(CHECKPOINT_FILE).exists() || dir.join(MANIFEST_FILE).exists() {
        Ok(())
    } else {
        Err(PipelineError::MissingCheckpoint(dir.to_path_buf()))
    }
}

/// Finishes the run in `dir` using the configuration stored there.
pub fn resume_run(dir: &Path, clients: &Clients, opts: ExecuteOptions) -> Result<RunManifest, PipelineError> {
    ensure_resumable(dir)?;
    let config = load_run_config(dir)?;
    let plan = plan_from_config(&config)?;
    execute_run(&plan, clients, opts)
}

/// Finishes the run in `config.output_dir`, refusing if `config` differs
/// from the one the run was started with.
pub fn resume_run_with_config(
    config: &RunConfig,
    clients: &Clients,
    opts: ExecuteOptions,
) -> Result<RunManifest, PipelineError> {
    let dir = &config.output_dir;
    ensure_resumable(dir)?;
    let stored = load_run_config(dir)?;
    let mut ours = config.clone();
    ours.output_dir = dir.clone();
    if stored.digest() != ours.digest() {
        return Err(PipelineError::DigestMismatch {
            expected: stored.digest(),
            found: ours.digest(),
        });
    }
    let plan = plan_from_config(&ours)?;
    execute_run(&plan, clients, opts)
}

/// Re-selects every sample of a finished run with the `rerank` client in
/// `clients`, leaving generation results untouched. Samples without a
/// successful candidate keep no selection.
pub fn rerank_run(dir: &Path, manifest: &RunManifest, clients: &Clients, workers: usize) -> Result<RunManifest, PipelineError> {
    let reranker = clients.get(Capability::Rerank)?;
    let slots: Mutex<Vec<Option<Selection>>> = Mutex::new(vec![None; manifest.samples.len()]);
    let indices: Vec<usize> = (0..manifest.samples.len()).collect();
    run_pool(&indices, workers, |&i| {
        let sample = &manifest.samples[i];
        let mut images = Vec::new();
        for c in manifest.candidates_for(&sample.id).filter(|c| c.is_ok()) {
            let path = dir.join(c.image_path.as_deref().expect("ok candidate has an image"));
            let bytes = std::fs::read(&path).map_err(io_err(&path))?;
            let candidate = CandidateRef {
                sample_id: c.sample_id.clone(),
                variant: c.variant.clone(),
                seed: c.seed,
            };
            images.push((candidate, bytes));
        }
        if images.is_empty() {
            return Ok(true);
        }
        let source = crate::prompt::SourceText::new(sample.id.clone(), sample.text.clone())?;
        let selection = rerank_candidates(&source, &images, &reranker)?;
        slots.lock().expect("rerank poisoned")[i] = Some(selection);
        Ok(true)
    })?;
    let mut out = manifest.clone();
    out.selections = slots.into_inner().expect("rerank poisoned").into_iter().flatten().collect();
    out.summary.selections = out.selections.len();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sanitizing_keeps_safe_ids() {
        assert_eq!(sanitize_path_component("coco-000123_a.b"), "coco-000123_a.b");
        let odd = sanitize_path_component("a/b");
        assert!(odd.starts_with("a_b-") && odd.len() == 12);
        assert_ne!(odd, sanitize_path_component("a_b"));
        assert_ne!(sanitize_path_component(".."), "..");
        assert!(!sanitize_path_component("").is_empty());
    }

    #[test]
    fn pool_stops_on_request() {
        let items: Vec<usize> = (0..100).collect();
        let seen = AtomicUsize::new(0);
        run_pool(&items, 1, |&i| {
            seen.fetch_add(1, Ordering::SeqCst);
            Ok(i < 9)
        })
        .unwrap();
        assert_eq!(seen.load(Ordering::SeqCst), 10);
        let err = run_pool(&items, 4, |&i| {
            if i == 5 {
                Err(PipelineError::Config("boom".into()))
            } else {
                Ok(true)
            }
        });
        assert!(matches!(err, Err(PipelineError::Config(_))));
    }
}
