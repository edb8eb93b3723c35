//! Append-only JSON Lines log of completed work, one item per line, used to
//! resume interrupted runs.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::manifest::{CandidateRecord, MANIFEST_SCHEMA};
use super::PipelineError;
use crate::rerank::Selection;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CheckpointEntry {
    Header { schema: u32, config_digest: String },
    Translation { sample_id: String, language: String, text: String },
    Paraphrase { sample_id: String, texts: Vec<String> },
    Candidate(CandidateRecord),
    Selection(Selection),
    SampleFailed { sample_id: String, reason: String },
}

pub struct Checkpoint {
    path: PathBuf,
    file: Mutex<File>,
}

impl Checkpoint {
    /// Opens an existing checkpoint (verifying its digest) or starts a new
    /// one. Returns the entries already recorded, header excluded.
    pub fn open(path: &Path, config_digest: &str) -> Result<(Self, Vec<CheckpointEntry>), PipelineError> {
        let io = |source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        };
        let entries = if path.exists() {
            let entries = read_entries(path)?;
            match entries.first() {
                Some(CheckpointEntry::Header {
                    config_digest: found, ..
                }) if found == config_digest => {}
                Some(CheckpointEntry::Header {
                    config_digest: found, ..
                }) => {
                    return Err(PipelineError::DigestMismatch {
                        expected: found.clone(),
                        found: config_digest.to_string(),
                    })
                }
                _ => {
                    return Err(PipelineError::CorruptCheckpoint {
                        line: 1,
                        message: "missing header".into(),
                    })
                }
            }
            entries.into_iter().skip(1).collect()
        } else {
            Vec::new()
        };
        let fresh = !path.exists();
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        let cp = Self {
            path: path.to_path_buf(),
            file: Mutex::new(file),
        };
        if fresh {
            cp.append(&CheckpointEntry::Header {
                schema: MANIFEST_SCHEMA,
                config_digest: config_digest.to_string(),
            })?;
        }
        Ok((cp, entries))
    }

    pub fn append(&self, entry: &CheckpointEntry) -> Result<(), PipelineError> {
        let mut line = serde_json::to_string(entry).expect("entry serializes");
        line.push('\n');
        let mut file = self.file.lock().expect("checkpoint poisoned");
        file.write_all(line.as_bytes())
            .and_then(|_| file.flush())
            .map_err(|source| PipelineError::Io {
                path: self.path.clone(),
                source,
            })
    }
}

/// Reads every entry. A torn final line (from a killed writer) is dropped;
/// damage anywhere else is an error.
pub fn read_entries(path: &Path) -> Result<Vec<CheckpointEntry>, PipelineError> {
    let file = File::open(path).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<Result<_, _>>()
        .map_err(|source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    let mut entries = Vec::with_capacity(lines.len());
    let last = lines.len().saturating_sub(1);
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<CheckpointEntry>(line) {
            Ok(e) => entries.push(e),
            Err(e) if i == last => log::warn!("dropping torn checkpoint line {}: {e}", i + 1),
            Err(e) => {
                return Err(PipelineError::CorruptCheckpoint {
                    line: i + 1,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(entries)
}

/// Reads the digest recorded in a checkpoint header.
pub fn checkpoint_digest(path: &Path) -> Result<String, PipelineError> {
    match read_entries(path)?.into_iter().next() {
        Some(CheckpointEntry::Header { config_digest, .. }) => Ok(config_digest),
        _ => Err(PipelineError::CorruptCheckpoint {
            line: 1,
            message: "missing header".into(),
        }),
    }
}
