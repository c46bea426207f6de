//! Append-only chat response cache, persisted as line-delimited records so
//! runs replay without network access and interrupted runs lose at most the
//! in-flight request.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use crate::error::Result;
use crate::gateway::types::ChatExchange;

pub struct ChatCache {
    path: Option<PathBuf>,
    entries: Mutex<HashMap<String, String>>,
}

impl ChatCache {
    /// In-memory cache with no persistence.
    pub fn ephemeral() -> Self {
        ChatCache {
            path: None,
            entries: Mutex::new(HashMap::new()),
        }
    }

    /// Open (or create) a persistent cache file, loading existing records.
    /// Unparseable lines (for example a truncated final write) are skipped.
    pub fn open(path: &Path) -> Result<Self> {
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            for line in reader.lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<ChatExchange>(&line) {
                    Ok(ex) => {
                        entries.insert(ex.cache_key, ex.response);
                    }
                    Err(_) => log::warn!("skipping unparseable cache line"),
                }
            }
        } else if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        Ok(ChatCache {
            path: Some(path.to_path_buf()),
            entries: Mutex::new(entries),
        })
    }

    pub fn get(&self, cache_key: &str) -> Option<String> {
        self.entries
            .lock()
            .expect("cache lock poisoned")
            .get(cache_key)
            .cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Record one exchange: in-memory immediately, then appended to disk.
    pub fn put(&self, exchange: &ChatExchange) -> Result<()> {
        {
            let mut map = self.entries.lock().expect("cache lock poisoned");
            map.insert(exchange.cache_key.clone(), exchange.response.clone());
        }
        if let Some(path) = &self.path {
            let mut file = OpenOptions::new().create(true).append(true).open(path)?;
            let mut line = serde_json::to_string(exchange)?;
            line.push('\n');
            file.write_all(line.as_bytes())?;
        }
        Ok(())
    }
}
