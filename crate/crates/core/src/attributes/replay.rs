//! Completion replay cache: one JSON object per line, keyed by prompt hash.

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayEntry {
    pub prompt_hash: String,
    pub model: String,
    pub prompt: String,
    pub completion: String,
}

#[derive(Debug, Default)]
pub struct ReplayCache {
    entries: Mutex<HashMap<String, ReplayEntry>>,
    path: Option<PathBuf>,
}

impl ReplayCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Load `path` if it exists; new entries are appended to it.
    pub fn open(path: &Path) -> Result<Self> {
        let mut entries = HashMap::new();
        if path.exists() {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let entry: ReplayEntry = serde_json::from_str(line)
                    .map_err(|e| Error::json(format!("{} line {}", path.display(), n + 1), e))?;
                entries.entry(entry.prompt_hash.clone()).or_insert(entry);
            }
        }
        Ok(Self {
            entries: Mutex::new(entries),
            path: Some(path.to_path_buf()),
        })
    }

    pub fn get(&self, prompt_hash: &str) -> Option<ReplayEntry> {
        self.entries.lock().expect("replay lock").get(prompt_hash).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("replay lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn record(&self, entry: ReplayEntry) -> Result<()> {
        let mut entries = self.entries.lock().expect("replay lock");
        if entries.contains_key(&entry.prompt_hash) {
            return Ok(());
        }
        if let Some(path) = &self.path {
            let mut line = serde_json::to_string(&entry).map_err(|e| Error::json("replay entry", e))?;
            line.push('\n');
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| Error::io(path, e))?;
            f.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
        }
        entries.insert(entry.prompt_hash.clone(), entry);
        Ok(())
    }
}
