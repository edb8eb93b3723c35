mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use polyprompt_core::backend::BackendError;
use polyprompt_core::dataset::DatasetError;
use polyprompt_core::eval::EvalError;
use polyprompt_core::pipeline::PipelineError;
use polyprompt_core::prompt::PromptError;
use polyprompt_core::rerank::RerankError;

use crate::config::{Overrides, UsageError};

/// Parallel multilingual prompting for text-to-image backends.
#[derive(Debug, Parser)]
#[command(name = "polyprompt", version)]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Response cache directory [default: .polyprompt-cache]
    #[arg(long, global = true, value_name = "DIR")]
    pub cache_dir: Option<PathBuf>,
    /// More log output; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Translate a dataset's captions and write it back out as JSONL.
    Translate(TranslateArgs),
    /// Generate and rerank candidates for every sample.
    Run(RunArgs),
    /// Finish an interrupted run.
    Resume(ResumeArgs),
    /// Re-select the best candidates of a finished run.
    Rerank(RerankArgs),
    /// Score one or more runs.
    Eval(EvalArgs),
    /// Print a table from existing evaluation reports.
    Report(ReportArgs),
    /// Inspect or empty the response cache.
    Cache {
        #[command(subcommand)]
        action: CacheAction,
    },
    /// Serve the deterministic mock backend over HTTP.
    ServeMock(ServeMockArgs),
}

#[derive(Debug, Args)]
pub struct TranslateArgs {
    /// Captions as JSONL or CSV.
    #[arg(long, value_name = "PATH")]
    pub dataset: Option<PathBuf>,
    /// Comma-separated language codes, e.g. de,es,fr.
    #[arg(long, value_name = "LIST")]
    pub languages: Option<String>,
    /// Where to write the translated JSONL.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Concurrent work items.
    #[arg(long, default_value_t = 4)]
    pub workers: usize,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Captions as JSONL or CSV.
    #[arg(long, value_name = "PATH")]
    pub dataset: Option<PathBuf>,
    /// Comma-separated language codes, e.g. de,es,fr.
    #[arg(long, value_name = "LIST")]
    pub languages: Option<String>,
    /// all, first:K or sample:K:SEED.
    #[arg(long, value_name = "STRATEGY")]
    pub variant_strategy: Option<String>,
    /// Comma-separated generation seeds.
    #[arg(long, value_name = "LIST")]
    pub seeds: Option<String>,
    /// pmt2i, english_only, single_language, reduplication or paraphrase.
    #[arg(long, value_name = "KIND")]
    pub ablation: Option<String>,
    /// Copies or paraphrases for the monolingual ablations.
    #[arg(long)]
    pub n: Option<usize>,
    /// Run directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub exec: ExecArgs,
}

#[derive(Debug, Args)]
pub struct ExecArgs {
    /// Concurrent work items.
    #[arg(long, default_value_t = 4)]
    pub workers: usize,
    /// Stop at the first backend failure.
    #[arg(long)]
    pub fail_fast: bool,
    #[arg(long, hide = true)]
    pub stop_after: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ResumeArgs {
    pub run_dir: PathBuf,
    #[command(flatten)]
    pub exec: ExecArgs,
}

#[derive(Debug, Args)]
pub struct RerankArgs {
    pub run_dir: PathBuf,
    /// Concurrent work items.
    #[arg(long, default_value_t = 4)]
    pub workers: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub run_dir: PathBuf,
    /// Further runs to score and tabulate alongside the first.
    #[arg(long, num_args = 1.., value_name = "RUN_DIR")]
    pub compare: Vec<PathBuf>,
    /// Comma-separated metrics: clip_t, clip_i, dino, reward,
    /// correct_proportion, bvqa, l1_diversity.
    #[arg(long, default_value = "clip_t", value_name = "LIST")]
    pub metrics: String,
    /// Score every generated candidate instead of the selected one.
    #[arg(long)]
    pub all_candidates: bool,
    /// Directory for the comparison table.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Concurrent work items.
    #[arg(long, default_value_t = 4)]
    pub workers: usize,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(required = true)]
    pub run_dirs: Vec<PathBuf>,
    #[arg(long, default_value = "md", value_parser = ["md", "csv"])]
    pub format: String,
}

#[derive(Debug, Subcommand)]
pub enum CacheAction {
    Stats,
    Clear,
}

#[derive(Debug, Args)]
pub struct ServeMockArgs {
    #[arg(long, default_value = "127.0.0.1:8077")]
    pub addr: String,
    #[arg(long, default_value = "mock-v1")]
    pub model_id: String,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            dataset: self.dataset.clone(),
            languages: self.languages.clone(),
            variant_strategy: self.variant_strategy.clone(),
            seeds: self.seeds.clone(),
            ablation: self.ablation.clone(),
            n: self.n,
            out: self.out.clone(),
        }
    }
}

fn pipeline_code(e: &PipelineError) -> u8 {
    match e {
        PipelineError::Config(_)
        | PipelineError::Dataset(_)
        | PipelineError::Prompt(_)
        | PipelineError::DigestMismatch { .. }
        | PipelineError::CorruptCheckpoint { .. }
        | PipelineError::CorruptManifest { .. }
        | PipelineError::MissingCheckpoint(_) => 2,
        PipelineError::Rerank(RerankError::Empty) => 4,
        PipelineError::Backend(_) | PipelineError::Rerank(_) => 3,
        PipelineError::Io { .. } | PipelineError::Interrupted { .. } => 4,
    }
}

/// 2 for configuration and validation problems, 3 for backend failures,
/// 4 for anything else.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<commands::AllSamplesFailed>() {
            return 3;
        }
        if cause.is::<UsageError>() || cause.is::<DatasetError>() || cause.is::<PromptError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<PipelineError>() {
            return pipeline_code(e);
        }
        if let Some(e) = cause.downcast_ref::<EvalError>() {
            return match e {
                EvalError::UnknownMetric(_)
                | EvalError::MissingBackend { .. }
                | EvalError::MissingReferences(_)
                | EvalError::NoQuestions
                | EvalError::LabelMismatch { .. } => 2,
                EvalError::Backend(_) | EvalError::Rerank(_) => 3,
                EvalError::Pipeline(p) => pipeline_code(p),
                _ => 4,
            };
        }
        if let Some(e) = cause.downcast_ref::<BackendError>() {
            return match e {
                BackendError::MissingRoute(_) => 2,
                BackendError::Cache(_) => 4,
                _ => 3,
            };
        }
    }
    4
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
