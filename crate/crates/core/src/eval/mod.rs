//! Metric suite over completed runs and Table-style reports.

mod harness;
mod metrics;
mod report;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use harness::{check_requirements, evaluate, write_reports, EvalMode, EvalOptions, EvalReport, MetricSummary, SampleDetail};
pub use metrics::{
    bvqa_score, correct_proportion, l1_distance, l1_diversity, l1_diversity_png, mean, normalize_png,
    L1_CANONICAL_SIDE,
};
pub use report::{format_metric, report_csv, report_markdown, ReportTable, MISSING_CELL};

use crate::backend::BackendError;
use crate::pipeline::{Capability, PipelineError};
use crate::rerank::RerankError;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no valid samples")]
    NoValidSamples,
    #[error("sample has no VQA questions")]
    MissingQuestions,
    #[error("probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("need at least 2 images, got {0}")]
    TooFewImages(usize),
    #[error("image buffers differ in size: {0} vs {1}")]
    ImageSizeMismatch(usize, usize),
    #[error("image: {0}")]
    Image(String),
    #[error("unknown metric {0:?}")]
    UnknownMetric(String),
    #[error("metric {metric} needs a {capability} endpoint but none is routed")]
    MissingBackend { metric: Metric, capability: &'static str },
    #[error("metric {0} needs reference images but no sample has one")]
    MissingReferences(Metric),
    #[error("metric bvqa needs questions but no sample has any")]
    NoQuestions,
    #[error("{labels} label(s) for {reports} report(s)")]
    LabelMismatch { labels: usize, reports: usize },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Rerank(#[from] RerankError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    ClipT,
    ClipI,
    Dino,
    Reward,
    CorrectProportion,
    Bvqa,
    L1Diversity,
}

impl Metric {
    pub const ALL: [Metric; 7] = [
        Metric::ClipT,
        Metric::ClipI,
        Metric::Dino,
        Metric::Reward,
        Metric::CorrectProportion,
        Metric::Bvqa,
        Metric::L1Diversity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::ClipT => "clip_t",
            Metric::ClipI => "clip_i",
            Metric::Dino => "dino",
            Metric::Reward => "reward",
            Metric::CorrectProportion => "correct_proportion",
            Metric::Bvqa => "bvqa",
            Metric::L1Diversity => "l1_diversity",
        }
    }

    /// Column heading used in report tables.
    pub fn heading(self) -> &'static str {
        match self {
            Metric::ClipT => "CLIP-T",
            Metric::ClipI => "CLIP-I",
            Metric::Dino => "DINO",
            Metric::Reward => "Reward",
            Metric::CorrectProportion => "Correct",
            Metric::Bvqa => "B-VQA",
            Metric::L1Diversity => "L1",
        }
    }

    /// The backend capability the metric is computed with, if any.
    pub fn capability(self) -> Option<Capability> {
        match self {
            Metric::ClipT => Some(Capability::Embed),
            Metric::ClipI => Some(Capability::ClipI),
            Metric::Dino => Some(Capability::Dino),
            Metric::Reward => Some(Capability::Reward),
            Metric::CorrectProportion => Some(Capability::Judge),
            Metric::Bvqa => Some(Capability::Vqa),
            Metric::L1Diversity => None,
        }
    }

    pub fn needs_reference(self) -> bool {
        matches!(self, Metric::ClipI | Metric::Dino)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| EvalError::UnknownMetric(s.to_string()))
    }
}

/// Parses `"clip_t,reward"`, dropping duplicates but keeping order.
pub fn parse_metric_list(list: &str) -> Result<Vec<Metric>, EvalError> {
    let mut out = Vec::new();
    for part in list.split(',').filter(|p| !p.trim().is_empty()) {
        let m: Metric = part.parse()?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(EvalError::UnknownMetric(list.to_string()));
    }
    Ok(out)
}
