//! Prompt datasets: JSONL (canonical) and CSV (plain prompt lists).
//!
//! JSONL lines look like
//! `{"id": "1", "text": "A dog.", "reference_image": "img/1.png",
//!   "questions": ["a dog?"], "translations": {"de": "Ein Hund."}}`
//! with every field but `id` and `text` optional. Paths are relative to the
//! dataset file's directory.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::prompt::{sample_ranks, LanguageCode, ParallelText, PromptError, SourceText};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("duplicate id {id:?} on lines {first} and {second}")]
    DuplicateId { id: String, first: usize, second: usize },
    #[error("line {line}: text is empty")]
    EmptyText { line: usize },
    #[error("line {line}: invalid translations: {source}")]
    Translations {
        line: usize,
        #[source]
        source: PromptError,
    },
    #[error("unsupported dataset format {0:?} (expected jsonl or csv)")]
    UnknownFormat(String),
    #[error("cannot sample {n} of {len} records")]
    SampleSize { n: usize, len: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_image: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub questions: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub translations: BTreeMap<String, String>,
}

impl DatasetRecord {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            reference_image: None,
            questions: Vec::new(),
            translations: BTreeMap::new(),
        }
    }

    pub fn source(&self) -> Result<SourceText, PromptError> {
        SourceText::new(self.id.clone(), self.text.clone())
    }

    pub fn reference_path(&self, base_dir: &Path) -> Option<PathBuf> {
        self.reference_image.as_ref().map(|p| base_dir.join(p))
    }

    /// Builds the parallel text over `languages`, in that order, from the
    /// record's translations. Fails if any language is missing.
    pub fn parallel(&self, languages: &[LanguageCode]) -> Result<ParallelText, PromptError> {
        let translations = languages
            .iter()
            .map(|l| {
                self.translations
                    .get(l.code())
                    .map(|t| (l.clone(), t.clone()))
                    .ok_or_else(|| PromptError::UnknownLanguage(l.code().to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        ParallelText::new(self.source()?, translations)
    }

    fn validate(&self, line: usize) -> Result<(), DatasetError> {
        if self.text.trim().is_empty() {
            return Err(DatasetError::EmptyText { line });
        }
        if self.id.trim().is_empty() {
            return Err(DatasetError::Malformed {
                line,
                message: "id is empty".into(),
            });
        }
        let translations = self
            .translations
            .iter()
            .map(|(code, text)| Ok((LanguageCode::from_code(code)?, text.clone())))
            .collect::<Result<Vec<_>, PromptError>>()
            .and_then(|t| ParallelText::new(self.source()?, t));
        translations.map(|_| ()).map_err(|source| DatasetError::Translations { line, source })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    Jsonl,
    Csv,
}

impl DatasetFormat {
    pub fn from_path(path: &Path) -> Result<Self, DatasetError> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => Ok(DatasetFormat::Jsonl),
            Some("csv") => Ok(DatasetFormat::Csv),
            other => Err(DatasetError::UnknownFormat(other.unwrap_or_default().to_string())),
        }
    }
}

pub fn load_prompts(path: &Path, format: DatasetFormat) -> Result<Vec<DatasetRecord>, DatasetError> {
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    match format {
        DatasetFormat::Jsonl => parse_jsonl(&text),
        DatasetFormat::Csv => parse_csv(&text),
    }
}

/// Loads a dataset, inferring the format from the file extension.
pub fn load_dataset(path: &Path) -> Result<Vec<DatasetRecord>, DatasetError> {
    load_prompts(path, DatasetFormat::from_path(path)?)
}

pub fn parse_jsonl(text: &str) -> Result<Vec<DatasetRecord>, DatasetError> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: DatasetRecord = serde_json::from_str(line).map_err(|e| DatasetError::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?;
        rows.push((i + 1, record));
    }
    finish(rows)
}

pub fn parse_csv(text: &str) -> Result<Vec<DatasetRecord>, DatasetError> {
    #[derive(Deserialize)]
    struct Row {
        id: String,
        text: String,
    }
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let malformed = |line: usize, e: csv::Error| DatasetError::Malformed {
        line,
        message: e.to_string(),
    };
    let headers = reader.headers().map_err(|e| malformed(1, e))?.clone();
    let mut rows = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        let line = reader.position().line() as usize;
        match reader.read_record(&mut record) {
            Ok(true) => {}
            Ok(false) => break,
            Err(e) => return Err(malformed(line, e)),
        }
        let line = record.position().map_or(line, |p| p.line() as usize);
        let row: Row = record.deserialize(Some(&headers)).map_err(|e| malformed(line, e))?;
        rows.push((line, DatasetRecord::new(row.id, row.text)));
    }
    finish(rows)
}

fn finish(rows: Vec<(usize, DatasetRecord)>) -> Result<Vec<DatasetRecord>, DatasetError> {
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (line, record) in &rows {
        record.validate(*line)?;
        if let Some(first) = seen.insert(record.id.clone(), *line) {
            return Err(DatasetError::DuplicateId {
                id: record.id.clone(),
                first,
                second: *line,
            });
        }
    }
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}

pub fn to_jsonl(records: &[DatasetRecord]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
        .collect()
}

/// Draws `n` records uniformly without replacement, keeping file order.
pub fn sample(records: &[DatasetRecord], n: usize, seed: u64) -> Result<Vec<DatasetRecord>, DatasetError> {
    if n == 0 || n > records.len() {
        return Err(DatasetError::SampleSize { n, len: records.len() });
    }
    Ok(sample_ranks(records.len() as u64, n as u64, seed)
        .into_iter()
        .map(|i| records[i as usize].clone())
        .collect())
}
