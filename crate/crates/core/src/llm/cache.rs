use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::backend::ChatRequest;
use super::LlmError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub request_digest: String,
    pub raw_response: String,
    pub timestamp: u64,
}

/// Hex SHA-256 of the request's canonical JSON.
pub fn request_digest(req: &ChatRequest) -> String {
    let bytes = serde_json::to_vec(req).expect("requests serialize");
    hex::encode(Sha256::digest(bytes))
}

/// One JSON file per request digest.
#[derive(Debug)]
pub struct ResponseCache {
    dir: PathBuf,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl ResponseCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into(), locks: Mutex::new(HashMap::new()) }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, digest: &str) -> PathBuf {
        self.dir.join(format!("{digest}.json"))
    }

    /// Lock serializing work on one key.
    pub fn key_lock(&self, digest: &str) -> Arc<Mutex<()>> {
        self.locks.lock().unwrap_or_else(|e| e.into_inner()).entry(digest.to_string()).or_default().clone()
    }

    pub fn get(&self, digest: &str) -> Option<CacheEntry> {
        let text = std::fs::read_to_string(self.path(digest)).ok()?;
        let entry: CacheEntry = serde_json::from_str(&text).ok()?;
        (entry.request_digest == digest).then_some(entry)
    }

    pub fn put(&self, digest: &str, raw: &str) -> Result<(), LlmError> {
        let io = |e: std::io::Error| LlmError::Cache(format!("{}: {e}", self.dir.display()));
        std::fs::create_dir_all(&self.dir).map_err(io)?;
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let entry = CacheEntry { request_digest: digest.to_string(), raw_response: raw.to_string(), timestamp };
        let tmp = self.dir.join(format!(".{digest}.{}.tmp", std::process::id()));
        std::fs::write(&tmp, serde_json::to_vec_pretty(&entry).expect("entries serialize")).map_err(io)?;
        std::fs::rename(&tmp, self.path(digest)).map_err(io)
    }
}
