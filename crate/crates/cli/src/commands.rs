use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use polyprompt_core::backend::{MockBackend, MockRegistry, ProtocolServer, ResponseCache};
use polyprompt_core::dataset::{load_dataset, to_jsonl};
use polyprompt_core::eval::{evaluate, parse_metric_list, write_reports, EvalMode, EvalOptions, EvalReport, Metric, ReportTable};
use polyprompt_core::pipeline::{
    execute_run, load_run_config, plan_from_config, rerank_run, resume_run, resume_run_with_config, translate_records,
    Clients, ExecuteOptions, RunConfig, RunManifest, MANIFEST_FILE,
};

use crate::config::{usage, Backends, ConfigFile, Overrides};
use crate::{CacheAction, Cli, Command, EvalArgs, ExecArgs, ReportArgs, RunArgs, TranslateArgs};

pub const EVAL_DIR: &str = "eval";

/// Every sample of a run failed. Maps to exit code 3.
#[derive(Debug)]
pub struct AllSamplesFailed(pub usize);

impl fmt::Display for AllSamplesFailed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "all {} sample(s) failed", self.0)
    }
}

impl std::error::Error for AllSamplesFailed {}

struct RunContext<'a> {
    cli: &'a Cli,
    file: ConfigFile,
    mocks: MockRegistry,
}

impl RunContext<'_> {
    fn cache(&self) -> Result<Arc<ResponseCache>> {
        let dir = self.file.cache_dir(self.cli.cache_dir.as_deref());
        Ok(Arc::new(ResponseCache::on_disk(&dir)?))
    }

    fn clients(&self, (endpoints, routing): &Backends) -> Result<Clients> {
        Ok(Clients::build(endpoints, routing, self.cache()?, &self.mocks)?)
    }

    /// Clients for an existing run: its stored backends, unless a config
    /// file supplies others.
    fn run_clients(&self, stored: &RunConfig) -> Result<Clients> {
        let backends = match self.file.backends()? {
            Some(b) => b,
            None => (stored.endpoints.clone(), stored.routing.clone()),
        };
        self.clients(&backends)
    }
}

fn execute_options(exec: &ExecArgs) -> ExecuteOptions {
    ExecuteOptions {
        workers: exec.workers,
        fail_fast: exec.fail_fast,
        stop_after: exec.stop_after,
    }
}

pub fn dispatch(cli: &Cli) -> Result<()> {
    let ctx = RunContext {
        cli,
        file: ConfigFile::optional(cli.config.as_deref())?,
        mocks: MockRegistry::new(),
    };
    match &cli.command {
        Command::Translate(args) => translate(&ctx, args),
        Command::Run(args) => run(&ctx, args),
        Command::Resume(args) => resume(&ctx, &args.run_dir, &args.exec),
        Command::Rerank(args) => rerank(&ctx, &args.run_dir, args.workers),
        Command::Eval(args) => eval(&ctx, args),
        Command::Report(args) => report(args),
        Command::Cache { action } => cache(&ctx, action),
        Command::ServeMock(args) => {
            let mock = Arc::new(MockBackend::new().with_model_id(args.model_id.clone()));
            let server = ProtocolServer::start(&args.addr, mock, args.model_id.clone())
                .map_err(|e| usage(format!("cannot listen on {}: {e}", args.addr)))?;
            println!("listening on {}", server.url());
            std::io::stdout().flush()?;
            server.join();
            Ok(())
        }
    }
}

fn translate(ctx: &RunContext, args: &TranslateArgs) -> Result<()> {
    let dataset = ctx.file.dataset(args.dataset.as_deref())?;
    let languages = ctx.file.languages(args.languages.as_deref())?;
    let backends = ctx.file.backends()?.unwrap_or_default();
    let clients = ctx.clients(&backends)?;
    let records = load_dataset(&dataset)?;
    let translated = translate_records(&records, &languages, &clients, args.workers)?;
    std::fs::write(&args.out, to_jsonl(&translated)).with_context(|| format!("writing {}", args.out.display()))?;
    let upstream: u64 = clients.all().map(|(_, c)| c.stats().upstream_requests).sum();
    println!(
        "translated {} record(s) into {} language(s); upstream calls: {upstream}",
        translated.len(),
        languages.len()
    );
    Ok(())
}

fn summarize(dir: &Path, manifest: &RunManifest) -> Result<()> {
    let s = &manifest.summary;
    println!(
        "{}: {} sample(s), {} candidate(s) ({} failed), {} selected, {} failed sample(s)",
        dir.display(),
        s.samples,
        s.candidates,
        s.failed_candidates,
        s.selections,
        s.failed_samples
    );
    if s.samples > 0 && s.selections == 0 {
        return Err(AllSamplesFailed(s.samples).into());
    }
    for f in &manifest.failed_samples {
        eprintln!("warning: sample {:?} failed: {}", f.sample_id, f.reason);
    }
    if s.failed_candidates > 0 {
        eprintln!("warning: {} candidate(s) failed to generate", s.failed_candidates);
    }
    Ok(())
}

fn run(ctx: &RunContext, args: &RunArgs) -> Result<()> {
    let config = ctx.file.run_config(&args.overrides())?;
    if config.output_dir.as_os_str().is_empty() {
        return Err(usage("no run directory: pass --out or set output_dir in the config file"));
    }
    let clients = ctx.clients(&(config.endpoints.clone(), config.routing.clone()))?;
    let plan = plan_from_config(&config)?;
    let manifest = execute_run(&plan, &clients, execute_options(&args.exec))?;
    summarize(&config.output_dir, &manifest)
}

fn resume(ctx: &RunContext, dir: &Path, exec: &ExecArgs) -> Result<()> {
    let manifest = if ctx.cli.config.is_some() {
        let config = ctx.file.run_config(&Overrides {
            out: Some(dir.to_path_buf()),
            ..Default::default()
        })?;
        let clients = ctx.clients(&(config.endpoints.clone(), config.routing.clone()))?;
        resume_run_with_config(&config, &clients, execute_options(exec))?
    } else {
        let stored = load_run_config(dir)?;
        resume_run(dir, &ctx.run_clients(&stored)?, execute_options(exec))?
    };
    summarize(dir, &manifest)
}

fn load_manifest(dir: &Path) -> Result<RunManifest> {
    let path = dir.join(MANIFEST_FILE);
    if !path.exists() {
        return Err(usage(format!("{} has no {MANIFEST_FILE}; finish the run first", dir.display())));
    }
    Ok(RunManifest::load(&path)?)
}

fn rerank(ctx: &RunContext, dir: &Path, workers: usize) -> Result<()> {
    let manifest = load_manifest(dir)?;
    let clients = ctx.run_clients(&load_run_config(dir)?)?;
    let updated = rerank_run(dir, &manifest, &clients, workers)?;
    let changed = updated
        .selections
        .iter()
        .filter(|s| {
            manifest
                .selection_for(&s.sample_id)
                .is_none_or(|old| old.chosen().candidate != s.chosen().candidate)
        })
        .count();
    updated.save(&dir.join(MANIFEST_FILE))?;
    println!("reselected {} sample(s); {changed} changed", updated.selections.len());
    Ok(())
}

fn label(dir: &Path) -> String {
    dir.file_name()
        .map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned())
}

fn eval(ctx: &RunContext, args: &EvalArgs) -> Result<()> {
    let metrics = parse_metric_list(&args.metrics)?;
    let opts = EvalOptions {
        metrics: metrics.clone(),
        mode: if args.all_candidates {
            EvalMode::AllCandidates
        } else {
            EvalMode::Selected
        },
        workers: args.workers,
    };
    let runs: Vec<&PathBuf> = std::iter::once(&args.run_dir).chain(&args.compare).collect();
    let mut reports = Vec::new();
    let mut labels = Vec::new();
    for dir in &runs {
        let manifest = load_manifest(dir)?;
        let clients = ctx.run_clients(&load_run_config(dir)?)?;
        let report = evaluate(dir, &manifest, &clients, &opts).with_context(|| format!("evaluating {}", dir.display()))?;
        let out = match (&args.out, runs.len()) {
            (Some(out), 1) => out.clone(),
            _ => dir.join(EVAL_DIR),
        };
        std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
        write_reports(&out, &report, &label(dir))?;
        for s in &report.metrics {
            if s.excluded > 0 {
                eprintln!("warning: {}: {} sample(s) excluded from {}", label(dir), s.excluded, s.metric);
            }
        }
        labels.push(label(dir));
        reports.push(report);
    }
    let table = ReportTable::new(&reports, &labels, &metrics)?;
    if runs.len() > 1 {
        if let Some(out) = &args.out {
            std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
            std::fs::write(out.join("comparison.md"), table.to_markdown())?;
            std::fs::write(out.join("comparison.csv"), table.to_csv())?;
        }
    }
    print!("{}", table.to_markdown());
    Ok(())
}

fn report(args: &ReportArgs) -> Result<()> {
    let mut reports = Vec::new();
    for dir in &args.run_dirs {
        let path = dir.join(EVAL_DIR).join("report.json");
        let text = std::fs::read_to_string(&path)
            .map_err(|e| usage(format!("{}: {e}; run `polyprompt eval` first", path.display())))?;
        let report: EvalReport =
            serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        reports.push(report);
    }
    let metrics: Vec<Metric> = Metric::ALL
        .into_iter()
        .filter(|m| reports.iter().any(|r| r.metric_list().contains(m)))
        .collect();
    let labels: Vec<String> = args.run_dirs.iter().map(|d| label(d)).collect();
    let table = ReportTable::new(&reports, &labels, &metrics)?;
    match args.format.as_str() {
        "csv" => print!("{}", table.to_csv()),
        _ => print!("{}", table.to_markdown()),
    }
    Ok(())
}

fn cache(ctx: &RunContext, action: &CacheAction) -> Result<()> {
    let cache = ctx.cache()?;
    match action {
        CacheAction::Stats => {
            let stats = cache.stats()?;
            println!("entries: {}\nbytes: {}", stats.entries, stats.bytes);
        }
        CacheAction::Clear => println!("removed {} entries", cache.clear()?),
    }
    Ok(())
}
