//! Run planning and resumable execution.
//!
//! A run directory holds `config.json`, an append-only `checkpoint.jsonl`,
//! candidate PNGs under `images/<sample>/<label>_<seed>.png`, and finally
//! `manifest.json`.

mod checkpoint;
mod config;
mod execute;
mod manifest;
mod plan;
mod translate;

use std::path::PathBuf;

pub use checkpoint::{checkpoint_digest, read_entries, Checkpoint, CheckpointEntry};
pub use config::{Capability, Clients, DatasetSampling, Routing, RunConfig};
pub use execute::{
    execute_run, load_run_config, rerank_run, resume_run, resume_run_with_config, sanitize_path_component, ExecuteOptions,
    CHECKPOINT_FILE, CONFIG_FILE, IMAGES_DIR, MANIFEST_FILE,
};
pub use manifest::{
    CandidateRecord, CandidateStatus, FailedSample, RunManifest, RunSummary, SampleEntry, Timing, MANIFEST_SCHEMA,
    TOOL_VERSION,
};
pub use translate::translate_records;
pub use plan::{
    check_clients, plan_from_config, plan_run, variants_for, GenerationItem, RunPlan, TranslationItem, VariantKind,
    VariantSpec,
};

use crate::backend::BackendError;
use crate::dataset::DatasetError;
use crate::prompt::PromptError;
use crate::rerank::RerankError;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dataset: {0}")]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("rerank: {0}")]
    Rerank(#[from] RerankError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config digest {found} does not match the run's digest {expected}; refusing to resume")]
    DigestMismatch { expected: String, found: String },
    #[error("corrupt checkpoint at line {line}: {message}")]
    CorruptCheckpoint { line: usize, message: String },
    #[error("{path}: corrupt manifest: {message}")]
    CorruptManifest { path: PathBuf, message: String },
    #[error("{0} has no checkpoint to resume from")]
    MissingCheckpoint(PathBuf),
    #[error("run interrupted after {completed} new generation item(s)")]
    Interrupted { completed: usize },
}

impl PipelineError {
    /// True when the error came from a backend rather than from local
    /// configuration or I/O.
    pub fn is_backend(&self) -> bool {
        matches!(
            self,
            PipelineError::Backend(_) | PipelineError::Rerank(RerankError::Backend(_) | RerankError::AllEmbeddingsFailed)
        )
    }
}
