//! Loading the TOML run configuration and layering command-line flags on
//! top of it.
//!
//! The file holds the fields of [`RunConfig`] plus an optional `cache_dir`.
//! Relative paths in the file resolve against the file's directory; paths
//! given as flags resolve against the working directory.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use polyprompt_core::backend::BackendEndpoint;
use polyprompt_core::pipeline::{Routing, RunConfig};
use polyprompt_core::prompt::{default_languages, parse_language_list, AblationKind, LanguageCode, VariantStrategy};

pub const DEFAULT_CACHE_DIR: &str = ".polyprompt-cache";

/// A problem with the configuration or the command line. Maps to exit
/// code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(message: impl Into<String>) -> anyhow::Error {
    UsageError(message.into()).into()
}

/// Flags that override fields of the configuration file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub dataset: Option<PathBuf>,
    pub languages: Option<String>,
    pub variant_strategy: Option<String>,
    pub seeds: Option<String>,
    pub ablation: Option<String>,
    pub n: Option<usize>,
    pub out: Option<PathBuf>,
}

pub type Backends = (BTreeMap<String, BackendEndpoint>, Routing);

#[derive(Debug)]
pub struct ConfigFile {
    path: Option<PathBuf>,
    table: toml::Table,
    cache_dir: Option<PathBuf>,
}

impl ConfigFile {
    pub fn empty() -> Self {
        Self {
            path: None,
            table: toml::Table::new(),
            cache_dir: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        let mut table: toml::Table = text.parse().map_err(|e| usage(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let cache_dir = match table.remove("cache_dir") {
            Some(toml::Value::String(dir)) => Some(base.join(dir)),
            Some(_) => return Err(usage(format!("{}: cache_dir must be a string", path.display()))),
            None => None,
        };
        Ok(Self {
            path: Some(path.to_path_buf()),
            table,
            cache_dir,
        })
    }

    pub fn optional(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::empty()), Self::load)
    }

    fn base_dir(&self) -> &Path {
        self.path
            .as_deref()
            .and_then(Path::parent)
            .unwrap_or(Path::new(""))
    }

    fn describe(&self) -> String {
        self.path
            .as_ref()
            .map_or_else(|| "configuration".to_string(), |p| p.display().to_string())
    }

    pub fn cache_dir(&self, flag: Option<&Path>) -> PathBuf {
        flag.map(Path::to_path_buf)
            .or_else(|| self.cache_dir.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_CACHE_DIR))
    }

    fn path_field(&self, key: &str) -> Option<PathBuf> {
        self.table
            .get(key)
            .and_then(toml::Value::as_str)
            .map(|p| self.base_dir().join(p))
    }

    pub fn dataset(&self, flag: Option<&Path>) -> Result<PathBuf> {
        flag.map(Path::to_path_buf)
            .or_else(|| self.path_field("dataset"))
            .ok_or_else(|| usage("no dataset given: pass --dataset or set dataset in the config file"))
    }

    pub fn languages(&self, flag: Option<&str>) -> Result<Vec<LanguageCode>> {
        if let Some(list) = flag {
            return parse_language_list(list).map_err(|e| usage(e.to_string()));
        }
        match self.table.get("languages") {
            Some(v) => v
                .clone()
                .try_into()
                .map_err(|e| usage(format!("{}: languages: {e}", self.describe()))),
            None => Ok(default_languages()),
        }
    }

    /// Builds the run configuration, applying `overrides`, and validates it.
    pub fn run_config(&self, overrides: &Overrides) -> Result<RunConfig> {
        let mut table = self.table.clone();
        let dataset = self.dataset(overrides.dataset.as_deref())?;
        let out = overrides.out.clone().or_else(|| self.path_field("output_dir"));
        table.insert("dataset".into(), toml::Value::String(dataset.to_string_lossy().into_owned()));
        table.remove("output_dir");

        let mut config: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e| usage(format!("{}: {e}", self.describe())))?;
        config.output_dir = out.unwrap_or_default();
        config.languages = self.languages(overrides.languages.as_deref())?;
        if let Some(s) = &overrides.variant_strategy {
            config.variant_strategy = s.parse::<VariantStrategy>().map_err(|e| usage(e.to_string()))?;
        }
        if let Some(s) = &overrides.seeds {
            config.seeds = parse_seeds(s)?;
        }
        if let Some(a) = &overrides.ablation {
            config.ablation = a.parse::<AblationKind>().map_err(|e| usage(e.to_string()))?;
        }
        if let Some(n) = overrides.n {
            config.ablation_n = Some(n);
        }
        let config = config.normalized()?;
        config.validate()?;
        Ok(config)
    }

    /// Endpoints and routing from the file, for commands that reuse a run's
    /// stored configuration but may point at other backends.
    pub fn backends(&self) -> Result<Option<Backends>> {
        if self.path.is_none() {
            return Ok(None);
        }
        let field = |key: &str| self.table.get(key).cloned().unwrap_or(toml::Value::Table(toml::Table::new()));
        let endpoints: BTreeMap<String, BackendEndpoint> = field("endpoints")
            .try_into()
            .map_err(|e| usage(format!("{}: endpoints: {e}", self.describe())))?;
        let routing: Routing = field("routing")
            .try_into()
            .map_err(|e| usage(format!("{}: routing: {e}", self.describe())))?;
        for (name, e) in &endpoints {
            e.validate()
                .map_err(|err| usage(format!("{}: endpoint {name:?}: {err}", self.describe())))?;
        }
        Ok(Some((endpoints, routing)))
    }
}

pub fn parse_seeds(list: &str) -> Result<Vec<u64>> {
    list.split(',')
        .map(|s| {
            s.trim()
                .parse::<u64>()
                .map_err(|_| usage(format!("invalid seed {:?}", s.trim())))
        })
        .collect::<Result<Vec<_>>>()
        .context("parsing --seeds")
}
