use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{Provider, ProviderError, ProviderRequest, ProviderResponse};

/// One line of a transcript file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub hash: String,
    pub request: ProviderRequest,
    pub response: ProviderResponse,
}

/// Append-only JSONL transcript indexed by request hash. A repeated hash
/// replaces the earlier entry (last write wins) and logs a warning.
#[derive(Debug, Default)]
pub struct TranscriptStore {
    path: Option<PathBuf>,
    inner: Mutex<HashMap<String, TranscriptEntry>>,
}

impl TranscriptStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens `path`, loading any existing entries. A missing file is an empty
    /// store; it is created on the first write.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, ProviderError> {
        let path = path.into();
        let mut entries = HashMap::new();
        if path.exists() {
            let raw = fs::read_to_string(&path).map_err(|e| store_err(&path, e))?;
            for (i, line) in raw.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let entry: TranscriptEntry =
                    serde_json::from_str(line).map_err(|e| store_err(&path, format!("line {}: {e}", i + 1)))?;
                if entries.contains_key(&entry.hash) {
                    log::warn!("{}: duplicate hash {} (last write wins)", path.display(), entry.hash);
                }
                entries.insert(entry.hash.clone(), entry);
            }
        }
        Ok(Self { path: Some(path), inner: Mutex::new(entries) })
    }

    /// Opens a store that must already exist, for replay.
    pub fn open_existing(path: impl Into<PathBuf>) -> Result<Self, ProviderError> {
        let path = path.into();
        if !path.exists() {
            return Err(store_err(&path, "transcript not found"));
        }
        Self::open(path)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn record(&self, req: &ProviderRequest, resp: &ProviderResponse) -> Result<(), ProviderError> {
        let entry = TranscriptEntry { hash: req.hash(), request: req.clone(), response: resp.clone() };
        let mut map = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(path) = &self.path {
            let line = serde_json::to_string(&entry).map_err(|e| store_err(path, e))?;
            let mut file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| store_err(path, e))?;
            writeln!(file, "{line}").map_err(|e| store_err(path, e))?;
        }
        if map.contains_key(&entry.hash) {
            log::warn!("transcript: hash {} recorded twice (last write wins)", entry.hash);
        }
        map.insert(entry.hash.clone(), entry);
        Ok(())
    }

    pub fn lookup(&self, hash: &str) -> Option<ProviderResponse> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner()).get(hash).map(|e| e.response.clone())
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn store_err(path: &Path, e: impl std::fmt::Display) -> ProviderError {
    ProviderError::Store { path: path.display().to_string(), message: e.to_string() }
}

/// Answers every request from a transcript; never touches the network.
pub struct ReplayProvider {
    store: Arc<TranscriptStore>,
}

impl ReplayProvider {
    pub fn new(store: Arc<TranscriptStore>) -> Self {
        Self { store }
    }
}

impl Provider for ReplayProvider {
    fn complete(&self, req: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
        req.validate()?;
        let hash = req.hash();
        self.store.lookup(&hash).ok_or(ProviderError::ReplayMiss { hash })
    }

    fn mode(&self) -> String {
        "replay".into()
    }
}

/// Forwards to `inner` and records every successful exchange.
pub struct RecordingProvider {
    inner: Arc<dyn Provider>,
    store: Arc<TranscriptStore>,
}

impl RecordingProvider {
    pub fn new(inner: Arc<dyn Provider>, store: Arc<TranscriptStore>) -> Self {
        Self { inner, store }
    }
}

impl Provider for RecordingProvider {
    fn complete(&self, req: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
        let resp = self.inner.complete(req)?;
        self.store.record(req, &resp)?;
        Ok(resp)
    }

    fn mode(&self) -> String {
        format!("record:{}", self.inner.mode())
    }
}
