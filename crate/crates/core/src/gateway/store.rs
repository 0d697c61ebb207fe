//! Append-only transcript store keyed by request hash.
//!
//! On disk a store is a directory holding `transcripts.jsonl` (one
//! [`TranscriptRecord`] per line) and `index.json` (request hash to line
//! number). The JSON-lines file is authoritative; the index is rebuilt from
//! it on open.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{ChatMessage, ChatRequest};

pub const TRANSCRIPT_FILE: &str = "transcripts.jsonl";
pub const INDEX_FILE: &str = "index.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub request_hash: String,
    pub request: ChatRequest,
    pub response: ChatMessage,
    pub recorded_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StoreError {
    #[error("transcript store {0} does not exist")]
    Missing(PathBuf),
    #[error("transcript store I/O on {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("corrupt transcript record at {path}:{line}: {message}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

fn io_err(path: &Path, e: impl ToString) -> StoreError {
    StoreError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

#[derive(Debug, Default)]
struct Loaded {
    records: BTreeMap<String, TranscriptRecord>,
    lines: BTreeMap<String, usize>,
}

/// Concurrent reads, serialized writes.
#[derive(Debug)]
pub struct TranscriptStore {
    dir: PathBuf,
    state: RwLock<Loaded>,
    writer: Mutex<()>,
}

impl TranscriptStore {
    /// Open a store, creating the directory if needed.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        Self::load(dir)
    }

    /// Open a store that must already hold a transcript file.
    pub fn open_existing(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        if !dir.join(TRANSCRIPT_FILE).is_file() {
            return Err(StoreError::Missing(dir));
        }
        Self::load(dir)
    }

    fn load(dir: PathBuf) -> Result<Self, StoreError> {
        let path = dir.join(TRANSCRIPT_FILE);
        let mut loaded = Loaded::default();
        if path.is_file() {
            let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let rec: TranscriptRecord =
                    serde_json::from_str(line).map_err(|e| StoreError::Corrupt {
                        path: path.clone(),
                        line: i + 1,
                        message: e.to_string(),
                    })?;
                if !loaded.records.contains_key(&rec.request_hash) {
                    loaded.lines.insert(rec.request_hash.clone(), i + 1);
                    loaded.records.insert(rec.request_hash.clone(), rec);
                }
            }
        }
        Ok(TranscriptStore {
            dir,
            state: RwLock::new(loaded),
            writer: Mutex::new(()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn len(&self) -> usize {
        self.state.read().expect("store lock poisoned").records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, hash: &str) -> Option<TranscriptRecord> {
        self.state
            .read()
            .expect("store lock poisoned")
            .records
            .get(hash)
            .cloned()
    }

    /// Persist `record` unless its hash is already present; returns the
    /// record that the store holds for that hash afterwards.
    pub fn insert_or_get(&self, record: TranscriptRecord) -> Result<TranscriptRecord, StoreError> {
        let _guard = self.writer.lock().expect("store writer poisoned");
        if let Some(existing) = self.get(&record.request_hash) {
            return Ok(existing);
        }
        let path = self.dir.join(TRANSCRIPT_FILE);
        let line = serde_json::to_string(&record).map_err(|e| io_err(&path, e))?;
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| io_err(&path, e))?;
        writeln!(file, "{line}").map_err(|e| io_err(&path, e))?;

        let mut state = self.state.write().expect("store lock poisoned");
        let line_no = state.lines.values().copied().max().unwrap_or(0) + 1;
        state.lines.insert(record.request_hash.clone(), line_no);
        state
            .records
            .insert(record.request_hash.clone(), record.clone());
        let index = serde_json::to_string_pretty(&state.lines).map_err(|e| io_err(&path, e))?;
        drop(state);
        let index_path = self.dir.join(INDEX_FILE);
        fs::write(&index_path, index).map_err(|e| io_err(&index_path, e))?;
        Ok(record)
    }

    /// All records in hash order.
    pub fn records(&self) -> Vec<TranscriptRecord> {
        self.state
            .read()
            .expect("store lock poisoned")
            .records
            .values()
            .cloned()
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::Role;

    fn record(hash: &str, reply: &str) -> TranscriptRecord {
        TranscriptRecord {
            request_hash: hash.into(),
            request: ChatRequest {
                model: "m".into(),
                messages: vec![],
                params: BTreeMap::new(),
            },
            response: ChatMessage {
                role: Role::Assistant,
                content: reply.into(),
            },
            recorded_at: Utc::now(),
        }
    }

    #[test]
    fn first_write_wins_and_survives_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let store = TranscriptStore::open(dir.path()).unwrap();
        store.insert_or_get(record("h1", "a")).unwrap();
        let kept = store.insert_or_get(record("h1", "b")).unwrap();
        assert_eq!(kept.response.content, "a");
        store.insert_or_get(record("h2", "c")).unwrap();

        let reopened = TranscriptStore::open_existing(dir.path()).unwrap();
        assert_eq!(reopened.len(), 2);
        assert_eq!(reopened.get("h1").unwrap().response.content, "a");
        let index: BTreeMap<String, usize> =
            serde_json::from_str(&fs::read_to_string(dir.path().join(INDEX_FILE)).unwrap())
                .unwrap();
        assert_eq!(index.get("h2"), Some(&2));
    }

    #[test]
    fn open_existing_requires_transcripts() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            TranscriptStore::open_existing(dir.path().join("nope")),
            Err(StoreError::Missing(_))
        ));
    }

    #[test]
    fn corrupt_line_is_reported_with_position() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(TRANSCRIPT_FILE), "{not json}\n").unwrap();
        let err = TranscriptStore::open_existing(dir.path()).unwrap_err();
        assert!(matches!(err, StoreError::Corrupt { line: 1, .. }));
    }
}
