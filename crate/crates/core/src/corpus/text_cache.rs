//! Content-addressed cache of text embeddings.
//!
//! File layout: the 4-byte magic `LRTC`, a little-endian `u32` format
//! version, then zero or more records of `(sha256[32], dim: u32 LE,
//! dim × f32 LE)`. Records are only ever appended; on duplicate keys the
//! first record wins.

use std::collections::HashMap;
use std::fmt;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use sha2::{Digest, Sha256};

use super::f32io::{decode_f32, encode_f32};
use crate::{Error, Result};

pub const TEXT_CACHE_MAGIC: &[u8; 4] = b"LRTC";
const TEXT_CACHE_VERSION: u32 = 1;
const HEADER_LEN: usize = 8;

/// SHA-256 of the exact UTF-8 bytes of a text.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TextKey(pub [u8; 32]);

impl fmt::Display for TextKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl fmt::Debug for TextKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TextKey({self})")
    }
}

pub fn text_key(text: &str) -> TextKey {
    TextKey(Sha256::digest(text.as_bytes()).into())
}

#[derive(Debug, Default)]
pub struct TextCache {
    entries: RwLock<HashMap<TextKey, Arc<[f32]>>>,
    path: Option<PathBuf>,
    append: Mutex<()>,
}

impl TextCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Load `path` if it exists; new entries are appended to it.
    pub fn open(path: &Path, dim: usize) -> Result<Self> {
        let mut entries = HashMap::new();
        if path.exists() {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            for (key, v) in parse(&bytes).map_err(|m| Error::TextCache(format!("{}: {m}", path.display())))? {
                if v.len() != dim {
                    return Err(Error::TextCache(format!(
                        "{}: entry {key} has dim {}, store image_dim is {dim}",
                        path.display(),
                        v.len()
                    )));
                }
                entries.entry(key).or_insert_with(|| Arc::from(v));
            }
        }
        Ok(Self {
            entries: RwLock::new(entries),
            path: Some(path.to_path_buf()),
            append: Mutex::new(()),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("text cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &TextKey) -> Option<Arc<[f32]>> {
        self.entries.read().expect("text cache lock").get(key).cloned()
    }

    /// Insert a vector and append it to the backing file, if any. Returns the
    /// cached vector, which is the existing one when `key` was already present.
    pub fn insert(&self, key: TextKey, vector: Vec<f32>) -> Result<Arc<[f32]>> {
        let _guard = self.append.lock().expect("text cache append lock");
        if let Some(existing) = self.get(&key) {
            return Ok(existing);
        }
        if let Some(path) = &self.path {
            append_record(path, &key, &vector)?;
        }
        let v: Arc<[f32]> = Arc::from(vector);
        self.entries
            .write()
            .expect("text cache lock")
            .insert(key, Arc::clone(&v));
        Ok(v)
    }

    /// Write every entry to `path` in key order, replacing any existing file.
    pub fn write_snapshot(&self, path: &Path) -> Result<()> {
        let entries = self.entries.read().expect("text cache lock");
        let mut keys: Vec<_> = entries.keys().copied().collect();
        keys.sort();
        let mut bytes = header();
        for key in keys {
            bytes.extend(record(&key, &entries[&key]));
        }
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }
}

fn header() -> Vec<u8> {
    let mut h = TEXT_CACHE_MAGIC.to_vec();
    h.extend_from_slice(&TEXT_CACHE_VERSION.to_le_bytes());
    h
}

fn record(key: &TextKey, v: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(36 + v.len() * 4);
    out.extend_from_slice(&key.0);
    out.extend_from_slice(&(v.len() as u32).to_le_bytes());
    out.extend(encode_f32(v));
    out
}

fn append_record(path: &Path, key: &TextKey, v: &[f32]) -> Result<()> {
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut bytes = if fresh { header() } else { Vec::new() };
    bytes.extend(record(key, v));
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

fn parse(bytes: &[u8]) -> std::result::Result<Vec<(TextKey, Vec<f32>)>, String> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != TEXT_CACHE_MAGIC {
        return Err("missing header".into());
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != TEXT_CACHE_VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let mut out = Vec::new();
    let mut at = HEADER_LEN;
    while at < bytes.len() {
        if bytes.len() - at < 36 {
            return Err(format!("truncated record header at byte {at}"));
        }
        let key = TextKey(bytes[at..at + 32].try_into().unwrap());
        let dim = u32::from_le_bytes(bytes[at + 32..at + 36].try_into().unwrap()) as usize;
        at += 36;
        let end = at + dim * 4;
        if end > bytes.len() {
            return Err(format!("truncated vector for {key}"));
        }
        let v = decode_f32(&bytes[at..end]).expect("multiple of 4");
        if v.iter().any(|x| !x.is_finite()) {
            return Err(format!("non-finite value in {key}"));
        }
        out.push((key, v));
        at = end;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_is_sha256_of_bytes() {
        assert_eq!(
            text_key("").to_string(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn append_then_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.bin");
        let cache = TextCache::open(&path, 2).unwrap();
        cache.insert(text_key("a"), vec![0.6, 0.8]).unwrap();
        cache.insert(text_key("b"), vec![1.0, 0.0]).unwrap();
        // duplicate keeps the first value and does not append
        let kept = cache.insert(text_key("a"), vec![0.0, 1.0]).unwrap();
        assert_eq!(&*kept, &[0.6, 0.8]);
        assert_eq!(fs::metadata(&path).unwrap().len(), 8 + 2 * (36 + 8));

        let reopened = TextCache::open(&path, 2).unwrap();
        assert_eq!(reopened.len(), 2);
        assert_eq!(&*reopened.get(&text_key("a")).unwrap(), &[0.6, 0.8]);
    }

    #[test]
    fn empty_snapshot_has_valid_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.bin");
        TextCache::in_memory().write_snapshot(&path).unwrap();
        assert_eq!(fs::read(&path).unwrap(), header());
        assert!(TextCache::open(&path, 4).unwrap().is_empty());
    }

    #[test]
    fn rejects_truncation_and_wrong_dim() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.bin");
        let cache = TextCache::open(&path, 2).unwrap();
        cache.insert(text_key("a"), vec![1.0, 0.0]).unwrap();
        assert!(TextCache::open(&path, 3).is_err());
        let mut bytes = fs::read(&path).unwrap();
        bytes.pop();
        fs::write(&path, bytes).unwrap();
        assert!(TextCache::open(&path, 2).is_err());
    }
}
