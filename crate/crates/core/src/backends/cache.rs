//! Content-addressed on-disk response cache.
//!
//! Entries live at `<root>/<backend>/<operation>/<aa>/<digest>.json`. Writes
//! go to a temporary file first and are renamed into place, so a killed run
//! never leaves a torn entry behind and a later run can resume from whatever
//! completed.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use tokio::sync::{Mutex as AsyncMutex, OwnedMutexGuard};

use crate::digest::{canonical_json, Digest};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CacheKey {
    pub backend_name: String,
    pub operation: String,
    /// Digest of the canonical (sorted-key) request body.
    pub payload_digest: Digest,
}

impl CacheKey {
    pub fn new(backend_name: &str, operation: &str, body: &Value) -> Result<Self> {
        let canonical = canonical_json(body)?;
        Ok(CacheKey {
            backend_name: backend_name.to_string(),
            operation: operation.to_string(),
            payload_digest: Digest::of(canonical),
        })
    }

    /// Digest over all three components; the file name of the entry.
    pub fn digest(&self) -> Digest {
        Digest::of_parts([
            self.backend_name.as_bytes(),
            self.operation.as_bytes(),
            &self.payload_digest.0,
        ])
    }
}

#[derive(Serialize, Deserialize)]
struct Entry {
    key: CacheKey,
    response: Value,
}

#[derive(Debug)]
pub struct ResponseCache {
    root: PathBuf,
    locks: Mutex<HashMap<Digest, Arc<AsyncMutex<()>>>>,
}

impl ResponseCache {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root)?;
        Ok(ResponseCache {
            root,
            locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Serializes work on one key. Holding the guard across lookup, transport
    /// and store means concurrent identical requests hit the backend once.
    pub async fn lock(&self, key: &CacheKey) -> OwnedMutexGuard<()> {
        let m = {
            let mut locks = self.locks.lock().expect("cache lock table poisoned");
            locks.entry(key.digest()).or_default().clone()
        };
        m.lock_owned().await
    }

    fn path_for(&self, key: &CacheKey) -> PathBuf {
        let hex = key.digest().hex();
        self.root
            .join(sanitize(&key.backend_name))
            .join(sanitize(&key.operation))
            .join(&hex[..2])
            .join(format!("{hex}.json"))
    }

    pub async fn get(&self, key: &CacheKey) -> Result<Option<Value>> {
        let path = self.path_for(key);
        let bytes = match tokio::fs::read(&path).await {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        match serde_json::from_slice::<Entry>(&bytes) {
            Ok(entry) if entry.key == *key => Ok(Some(entry.response)),
            // Unreadable or mismatched entries are treated as misses and
            // overwritten by the next put.
            _ => {
                tracing::warn!(path = %path.display(), "ignoring corrupt cache entry");
                Ok(None)
            }
        }
    }

    pub async fn put(&self, key: &CacheKey, response: &Value) -> Result<()> {
        let path = self.path_for(key);
        let dir = path.parent().expect("entry path has a parent");
        tokio::fs::create_dir_all(dir).await?;
        let entry = Entry {
            key: key.clone(),
            response: response.clone(),
        };
        let bytes = serde_json::to_vec(&entry)?;
        let tmp = path.with_extension(format!("json.tmp{}", std::process::id()));
        tokio::fs::write(&tmp, bytes).await?;
        tokio::fs::rename(&tmp, &path).await?;
        Ok(())
    }
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}
