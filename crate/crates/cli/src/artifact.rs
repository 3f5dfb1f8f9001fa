//! Artifact plumbing: content hashes, atomic writes and stage records used to
//! skip up-to-date stages.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use listener_core::corpus::Manifest;
use listener_core::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    hash_into(&mut hasher, path)?;
    Ok(hex::encode(hasher.finalize()))
}

fn hash_into(hasher: &mut Sha256, path: &Path) -> Result<()> {
    let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
    io::copy(&mut f, hasher).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Write `bytes` to a temporary file next to `path`, then rename it into
/// place, so readers never observe a half-written artifact.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::json(path.display().to_string(), e))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
}

/// A stage input that may span several files, such as a store manifest and
/// the arrays it references.
#[derive(Debug, Clone)]
pub struct Input {
    pub label: String,
    pub files: Vec<PathBuf>,
}

impl Input {
    pub fn file(label: impl Into<String>, path: &Path) -> Self {
        Self {
            label: label.into(),
            files: vec![path.to_path_buf()],
        }
    }

    /// The manifest plus every array file it references. The text cache is
    /// left out: it only ever grows, and existing entries never change.
    pub fn store(manifest_path: &Path) -> Result<Self> {
        let manifest: Manifest = read_json(manifest_path)?;
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        let mut files = vec![manifest_path.to_path_buf()];
        for clip in &manifest.clips {
            files.push(base.join(&clip.files.image_embeddings));
            files.push(base.join(&clip.files.expression_track));
            files.extend(clip.files.face.values().map(|p| base.join(p)));
        }
        Ok(Self {
            label: "store".into(),
            files,
        })
    }

    pub fn digest(&self) -> Result<String> {
        if let [single] = self.files.as_slice() {
            return sha256_file(single);
        }
        let mut hasher = Sha256::new();
        for f in &self.files {
            hasher.update(sha256_file(f)?.as_bytes());
        }
        Ok(hex::encode(hasher.finalize()))
    }

    fn newest(&self) -> Option<SystemTime> {
        self.files
            .iter()
            .map(|f| fs::metadata(f).and_then(|m| m.modified()).ok())
            .try_fold(SystemTime::UNIX_EPOCH, |acc, t| t.map(|t| acc.max(t)))
    }
}

/// What a stage consumed and produced, stored under `<out_dir>/.stages/`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub config_sha256: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

pub fn record_path(out_dir: &Path, stage: &str) -> PathBuf {
    out_dir.join(".stages").join(format!("{stage}.json"))
}

pub fn output_label(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

impl StageRecord {
    pub fn capture(stage: &str, config_sha256: &str, inputs: &[Input], outputs: &[PathBuf]) -> Result<Self> {
        Ok(Self {
            stage: stage.to_string(),
            config_sha256: config_sha256.to_string(),
            inputs: inputs
                .iter()
                .map(|i| Ok((i.label.clone(), i.digest()?)))
                .collect::<Result<_>>()?,
            outputs: outputs
                .iter()
                .map(|p| Ok((output_label(p), sha256_file(p)?)))
                .collect::<Result<_>>()?,
        })
    }
}

/// True when the previous run of a stage is still valid: same configuration,
/// outputs unchanged since they were recorded, and every input either older
/// than the outputs or byte-identical to what was recorded.
pub fn is_up_to_date(record: &Path, config_sha256: &str, inputs: &[Input], outputs: &[PathBuf]) -> bool {
    let Ok(rec) = read_json::<StageRecord>(record) else {
        return false;
    };
    if rec.config_sha256 != config_sha256 || rec.outputs.len() != outputs.len() {
        return false;
    }
    let mut oldest_output: Option<SystemTime> = None;
    for p in outputs {
        match (rec.outputs.get(&output_label(p)), sha256_file(p)) {
            (Some(recorded), Ok(actual)) if *recorded == actual => {}
            _ => return false,
        }
        let Ok(t) = fs::metadata(p).and_then(|m| m.modified()) else {
            return false;
        };
        oldest_output = Some(oldest_output.map_or(t, |o| o.min(t)));
    }
    inputs.iter().all(|input| {
        let fresh = matches!((input.newest(), oldest_output), (Some(i), Some(o)) if i <= o);
        fresh || matches!((rec.inputs.get(&input.label), input.digest()), (Some(r), Ok(d)) if *r == d)
    })
}

pub fn sha256_json(value: &serde_json::Value) -> String {
    hex::encode(Sha256::digest(value.to_string().as_bytes()))
}
