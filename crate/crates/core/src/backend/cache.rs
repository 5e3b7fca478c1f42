use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ApiStyle, BackendConfig};

/// Content hash identifying one completion request.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CacheKey(String);

impl CacheKey {
    pub fn new(config: &BackendConfig, prompt: &str) -> Self {
        let style = match config.api_style {
            ApiStyle::Chat => "chat",
            ApiStyle::Completion => "completion",
        };
        let max_tokens = config.max_tokens.to_string();
        let mut hasher = Sha256::new();
        // length-prefixed so that field boundaries cannot collide
        for field in [
            config.endpoint_url.as_str(),
            config.model_name.as_str(),
            style,
            prompt,
            max_tokens.as_str(),
        ] {
            hasher.update((field.len() as u64).to_le_bytes());
            hasher.update(field.as_bytes());
        }
        Self(hex::encode(hasher.finalize()))
    }

    pub fn as_hex(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    prompt: String,
    text: String,
    timestamp: u64,
}

/// Completion cache, either in memory or as one JSON file per key at
/// `<dir>/<first two hex digits>/<key>.json`.
#[derive(Debug)]
pub enum Cache {
    Memory(Mutex<HashMap<CacheKey, String>>),
    Disk(PathBuf),
}

impl Cache {
    pub fn in_memory() -> Self {
        Self::Memory(Mutex::new(HashMap::new()))
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> Self {
        Self::Disk(dir.into())
    }

    fn entry_path(dir: &Path, key: &CacheKey) -> PathBuf {
        dir.join(&key.0[..2]).join(format!("{}.json", key.0))
    }

    pub fn get(&self, key: &CacheKey) -> Option<String> {
        match self {
            Self::Memory(map) => map.lock().expect("cache poisoned").get(key).cloned(),
            Self::Disk(dir) => {
                let raw = fs::read_to_string(Self::entry_path(dir, key)).ok()?;
                serde_json::from_str::<Entry>(&raw).ok().map(|e| e.text)
            }
        }
    }

    /// Stores a completion. Disk writes go through a temp file and a rename,
    /// so concurrent writers of the same key leave one complete entry.
    pub fn put(&self, key: &CacheKey, prompt: &str, text: &str) -> io::Result<()> {
        match self {
            Self::Memory(map) => {
                map.lock()
                    .expect("cache poisoned")
                    .insert(key.clone(), text.to_string());
                Ok(())
            }
            Self::Disk(dir) => {
                let path = Self::entry_path(dir, key);
                let parent = path.parent().expect("entry has a parent");
                fs::create_dir_all(parent)?;
                let timestamp = SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map_or(0, |d| d.as_secs());
                let entry = Entry {
                    prompt: prompt.to_string(),
                    text: text.to_string(),
                    timestamp,
                };
                let tmp = tempfile_in(parent, &key.0);
                fs::write(&tmp, serde_json::to_vec(&entry)?)?;
                fs::rename(&tmp, &path)
            }
        }
    }
}

fn tempfile_in(dir: &Path, key: &str) -> PathBuf {
    use std::sync::atomic::{AtomicU64, Ordering};
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let n = COUNTER.fetch_add(1, Ordering::Relaxed);
    dir.join(format!(".{key}.{}.{n}.tmp", std::process::id()))
}
