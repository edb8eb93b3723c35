//! Content-addressed response cache.
//!
//! Each entry is stored as `<dir>/<aa>/<digest>.json` (the response body)
//! next to `<digest>.meta.json` (operation, model id, creation time), where
//! `aa` is the first two hex digits of the digest. Writes go through a temp
//! file in the same directory followed by a rename, so readers in other
//! processes never observe partial files.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::BackendError;

/// Serializes JSON with object keys sorted and no insignificant whitespace.
pub fn canonical_json(value: &Value) -> String {
    let mut out = String::new();
    write_canonical(value, &mut out);
    out
}

fn write_canonical(value: &Value, out: &mut String) {
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(k.clone()).to_string());
                out.push(':');
                write_canonical(&map[k], out);
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, v) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(v, out);
            }
            out.push(']');
        }
        scalar => out.push_str(&scalar.to_string()),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey {
    digest: String,
}

impl CacheKey {
    pub fn new(operation: &str, payload: &Value, model_id: &str) -> Self {
        let envelope = serde_json::json!({
            "operation": operation,
            "payload": payload,
            "model_id": model_id,
        });
        Self {
            digest: sha256_hex(canonical_json(&envelope).as_bytes()),
        }
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Sidecar {
    operation: String,
    model_id: String,
    created_at: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CacheStats {
    pub entries: usize,
    pub bytes: u64,
}

/// In-memory layer always; on-disk layer when constructed with a directory.
#[derive(Debug, Default)]
pub struct ResponseCache {
    dir: Option<PathBuf>,
    memory: Mutex<HashMap<String, Value>>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> Result<Self, BackendError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| BackendError::Cache(format!("{}: {e}", dir.display())))?;
        Ok(Self {
            dir: Some(dir),
            memory: Mutex::default(),
        })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn entry_path(dir: &Path, digest: &str) -> PathBuf {
        dir.join(&digest[..2]).join(format!("{digest}.json"))
    }

    pub fn get(&self, key: &CacheKey) -> Option<Value> {
        if let Some(v) = self.memory.lock().expect("cache poisoned").get(key.digest()) {
            return Some(v.clone());
        }
        let dir = self.dir.as_ref()?;
        let path = Self::entry_path(dir, key.digest());
        let text = fs::read_to_string(&path).ok()?;
        match serde_json::from_str::<Value>(&text) {
            Ok(v) => {
                self.memory
                    .lock()
                    .expect("cache poisoned")
                    .insert(key.digest().to_string(), v.clone());
                Some(v)
            }
            Err(e) => {
                log::warn!("ignoring corrupt cache entry {}: {e}", path.display());
                None
            }
        }
    }

    pub fn put(&self, key: &CacheKey, operation: &str, model_id: &str, value: &Value) -> Result<(), BackendError> {
        self.memory
            .lock()
            .expect("cache poisoned")
            .insert(key.digest().to_string(), value.clone());
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        let path = Self::entry_path(dir, key.digest());
        let sidecar = Sidecar {
            operation: operation.to_string(),
            model_id: model_id.to_string(),
            created_at: chrono::Utc::now().to_rfc3339(),
        };
        let meta_path = path.with_extension("meta.json");
        write_atomic(&meta_path, serde_json::to_string(&sidecar).expect("sidecar").as_bytes())?;
        write_atomic(&path, value.to_string().as_bytes())
    }

    pub fn stats(&self) -> Result<CacheStats, BackendError> {
        let mut stats = CacheStats::default();
        let Some(dir) = &self.dir else {
            stats.entries = self.memory.lock().expect("cache poisoned").len();
            return Ok(stats);
        };
        for shard in read_dir(dir)? {
            if !shard.is_dir() {
                continue;
            }
            for file in read_dir(&shard)? {
                let name = file.file_name().and_then(|n| n.to_str()).unwrap_or_default();
                if name.ends_with(".json") && !name.ends_with(".meta.json") {
                    stats.entries += 1;
                }
                stats.bytes += fs::metadata(&file).map(|m| m.len()).unwrap_or(0);
            }
        }
        Ok(stats)
    }

    /// Removes every entry; returns how many responses were dropped.
    pub fn clear(&self) -> Result<usize, BackendError> {
        let removed = self.stats()?.entries;
        self.memory.lock().expect("cache poisoned").clear();
        if let Some(dir) = &self.dir {
            for shard in read_dir(dir)? {
                let res = if shard.is_dir() {
                    fs::remove_dir_all(&shard)
                } else {
                    fs::remove_file(&shard)
                };
                res.map_err(|e| BackendError::Cache(format!("{}: {e}", shard.display())))?;
            }
        }
        Ok(removed)
    }
}

fn read_dir(dir: &Path) -> Result<Vec<PathBuf>, BackendError> {
    let entries = fs::read_dir(dir).map_err(|e| BackendError::Cache(format!("{}: {e}", dir.display())))?;
    Ok(entries.filter_map(|e| e.ok().map(|e| e.path())).collect())
}

/// Writes `bytes` to `path` via a sibling temp file and rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), BackendError> {
    let parent = path.parent().unwrap_or_else(|| Path::new("."));
    let io = |e: std::io::Error| BackendError::Cache(format!("{}: {e}", path.display()));
    fs::create_dir_all(parent).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(parent).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.flush().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}
