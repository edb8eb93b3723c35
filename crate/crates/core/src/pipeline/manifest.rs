use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::backend::write_atomic;
use crate::rerank::Selection;

pub const MANIFEST_SCHEMA: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timing {
    pub started_at: String,
    pub elapsed_ms: u64,
}

/// One generated (or failed) candidate image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub sample_id: String,
    pub variant: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<u64>,
    pub prompt: String,
    pub seed: u64,
    pub status: CandidateStatus,
    /// Relative to the run directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<u32>,
    pub backend_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

impl CandidateRecord {
    pub fn is_ok(&self) -> bool {
        self.status == CandidateStatus::Ok
    }

    pub fn key(&self) -> (&str, &str, u64) {
        (&self.sample_id, &self.variant, self.seed)
    }
}

/// What the evaluator needs to know about each sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_image: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub questions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailedSample {
    pub sample_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub samples: usize,
    pub candidates: usize,
    pub failed_candidates: usize,
    pub selections: usize,
    pub failed_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: u32,
    pub tool_version: String,
    pub config_digest: String,
    pub dataset: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_sample: Option<super::DatasetSampling>,
    pub samples: Vec<SampleEntry>,
    pub candidates: Vec<CandidateRecord>,
    pub selections: Vec<Selection>,
    pub failed_samples: Vec<FailedSample>,
    pub summary: RunSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<String>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let manifest: RunManifest = serde_json::from_str(&text).map_err(|e| PipelineError::CorruptManifest {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if manifest.schema != MANIFEST_SCHEMA {
            return Err(PipelineError::CorruptManifest {
                path: path.to_path_buf(),
                message: format!("unsupported schema {}", manifest.schema),
            });
        }
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        write_atomic(path, text.as_bytes()).map_err(|e| PipelineError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::other(e.to_string()),
        })
    }

    /// Copy with wall-clock fields removed, for reproducibility checks.
    pub fn without_timing(&self) -> Self {
        let mut m = self.clone();
        m.finished_at = None;
        for c in &mut m.candidates {
            c.timing = None;
        }
        m
    }

    pub fn selection_for(&self, sample_id: &str) -> Option<&Selection> {
        self.selections.iter().find(|s| s.sample_id == sample_id)
    }

    pub fn candidates_for<'a>(&'a self, sample_id: &'a str) -> impl Iterator<Item = &'a CandidateRecord> + 'a {
        self.candidates.iter().filter(move |c| c.sample_id == sample_id)
    }

    /// The candidate record chosen for `sample_id`, if any.
    pub fn selected_candidate(&self, sample_id: &str) -> Option<&CandidateRecord> {
        let chosen = &self.selection_for(sample_id)?.chosen().candidate;
        self.candidates.iter().find(|c| {
            c.sample_id == chosen.sample_id && c.variant == chosen.variant && c.seed == chosen.seed && c.is_ok()
        })
    }
}
