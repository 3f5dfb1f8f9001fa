//! Run configuration: defaults, `key = value` config files, and the echo
//! embedded in every artifact.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use listener_core::attributes::{BackendConfig, BackendKind, DEFAULT_MAX_TOKENS, DEFAULT_TEMPERATURE};
use listener_core::corpus::GoalSpec;
use listener_core::eval::{Method, DEFAULT_K_VALUES};
use listener_core::keyframes::{KeyframeOptions, Strategy, DEFAULT_K};
use listener_core::{Error, Result};
use serde_json::{json, Value};

use crate::artifact::sha256_file;

/// How description texts are turned into vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbedderKind {
    /// Only precomputed vectors from the store's text cache.
    Cache,
    /// Offline feature hashing for texts missing from the cache.
    Hashing,
}

impl fmt::Display for EmbedderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EmbedderKind::Cache => "cache",
            EmbedderKind::Hashing => "hashing",
        })
    }
}

impl FromStr for EmbedderKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "cache" => Ok(EmbedderKind::Cache),
            "hashing" => Ok(EmbedderKind::Hashing),
            other => Err(format!("unknown text embedder `{other}` (expected cache|hashing)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AdapterSource {
    /// Train a new adapter in the pipeline.
    Train,
    None,
    File(PathBuf),
}

impl fmt::Display for AdapterSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdapterSource::Train => f.write_str("train"),
            AdapterSource::None => f.write_str("none"),
            AdapterSource::File(p) => write!(f, "{}", p.display()),
        }
    }
}

impl AdapterSource {
    fn parse(s: &str, base: &Path) -> Self {
        match s {
            "train" => AdapterSource::Train,
            "none" => AdapterSource::None,
            path => AdapterSource::File(base.join(path)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub store: PathBuf,
    pub out_dir: PathBuf,
    pub k: usize,
    pub keyframe_mode: Strategy,
    pub min_height: Option<f64>,
    pub goal: String,
    pub negated_goal: String,
    /// Built-in template name or a template file path.
    pub template: String,
    pub backend: BackendKind,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub endpoint: Option<String>,
    /// Defaults to `replay.jsonl` next to the store manifest.
    pub replay_cache: Option<PathBuf>,
    pub max_in_flight: usize,
    pub text_embedder: EmbedderKind,
    pub adapter: AdapterSource,
    pub learning_rate: f64,
    pub epochs: usize,
    pub per_keyframe: bool,
    pub methods: Vec<String>,
    pub k_values: Vec<usize>,
    pub top_k: usize,
    pub renormalize_mean: bool,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let goal = GoalSpec::default();
        Self {
            store: PathBuf::from("manifest.json"),
            out_dir: PathBuf::from("out"),
            k: DEFAULT_K,
            keyframe_mode: Strategy::Peaks,
            min_height: None,
            goal: goal.goal,
            negated_goal: goal.negated_goal,
            template: "zero_shot".into(),
            backend: BackendKind::ReplayCache,
            model: "mock".into(),
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
            endpoint: None,
            replay_cache: None,
            max_in_flight: 4,
            text_embedder: EmbedderKind::Cache,
            adapter: AdapterSource::Train,
            learning_rate: 1e-2,
            epochs: 1,
            per_keyframe: true,
            methods: ["ours_social", "ours_rude", "no_adapter", "uniform_frames", "random"]
                .map(String::from)
                .to_vec(),
            k_values: DEFAULT_K_VALUES.to_vec(),
            top_k: 5,
            renormalize_mean: false,
            seed: 0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::InvalidArgument(format!("config key `{key}`: {e}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

impl RunConfig {
    /// Set one key; relative paths are resolved against `base`.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "store" => self.store = base.join(value),
            "out_dir" => self.out_dir = base.join(value),
            "k" => self.k = parse(key, value)?,
            "keyframe_mode" => self.keyframe_mode = parse(key, value)?,
            "min_height" => self.min_height = Some(parse(key, value)?),
            "goal" => self.goal = value.to_string(),
            "negated_goal" => self.negated_goal = value.to_string(),
            "template" => {
                self.template = match value {
                    "zero_shot" | "few_shot_cot" | "few_shot_chain_of_thought" => value.to_string(),
                    path => base.join(path).display().to_string(),
                }
            }
            "backend" => self.backend = parse(key, value)?,
            "model" => self.model = value.to_string(),
            "temperature" => self.temperature = parse(key, value)?,
            "max_tokens" => self.max_tokens = parse(key, value)?,
            "endpoint" => self.endpoint = Some(value.to_string()),
            "replay_cache" => self.replay_cache = Some(base.join(value)),
            "max_in_flight" => self.max_in_flight = parse(key, value)?,
            "text_embedder" => self.text_embedder = parse(key, value)?,
            "adapter" => self.adapter = AdapterSource::parse(value, base),
            "learning_rate" | "lr" => self.learning_rate = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "per_keyframe" => self.per_keyframe = parse(key, value)?,
            "methods" => self.methods = parse_list(key, value)?,
            "k_values" => self.k_values = parse_list(key, value)?,
            "top_k" => self.top_k = parse(key, value)?,
            "renormalize_mean" => self.renormalize_mean = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            other => return Err(Error::InvalidArgument(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Apply a `key = value` file. Blank lines and `#` comments are ignored;
    /// relative paths in the file are relative to the file itself.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidArgument(format!("{}:{}: expected `key = value`", path.display(), n + 1))
            })?;
            self.set(key, value, base)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        if self.top_k < 1 {
            return Err(Error::InvalidArgument("top_k must be at least 1".into()));
        }
        if self.k_values.iter().any(|&k| k < 1) {
            return Err(Error::InvalidArgument("k_values must be at least 1".into()));
        }
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::InvalidArgument("learning_rate must be positive".into()));
        }
        self.goal_spec()?;
        self.parsed_methods()?;
        Ok(())
    }

    pub fn goal_spec(&self) -> Result<GoalSpec> {
        GoalSpec::new(&self.goal, &self.negated_goal)
    }

    pub fn parsed_methods(&self) -> Result<Vec<Method>> {
        self.methods.iter().map(|m| Method::parse(m, self.seed)).collect()
    }

    pub fn keyframe_options(&self) -> KeyframeOptions {
        KeyframeOptions {
            k: self.k,
            strategy: self.keyframe_mode,
            min_height: self.min_height,
        }
    }

    pub fn backend_config(&self) -> BackendConfig {
        BackendConfig {
            kind: self.backend,
            model: self.model.clone(),
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            endpoint: self.endpoint.clone(),
        }
    }

    pub fn replay_path(&self) -> PathBuf {
        self.replay_cache.clone().unwrap_or_else(|| {
            self.store
                .parent()
                .unwrap_or(Path::new("."))
                .join("replay.jsonl")
        })
    }

    /// The configuration as recorded in artifacts: file names and content
    /// hashes stand in for paths, so the echo does not depend on where the
    /// run happened.
    pub fn echo(&self) -> Result<Value> {
        let template = match self.template.as_str() {
            name @ ("zero_shot" | "few_shot_cot" | "few_shot_chain_of_thought") => json!(name),
            path => file_ref(Path::new(path))?,
        };
        let adapter = match &self.adapter {
            AdapterSource::File(p) => file_ref(p)?,
            other => json!(other.to_string()),
        };
        Ok(json!({
            "store": file_ref(&self.store)?,
            "k": self.k,
            "keyframe_mode": self.keyframe_mode.to_string(),
            "min_height": self.min_height,
            "goal": self.goal,
            "negated_goal": self.negated_goal,
            "template": template,
            "backend": self.backend.to_string(),
            "model": self.model,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "text_embedder": self.text_embedder.to_string(),
            "adapter": adapter,
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "per_keyframe": self.per_keyframe,
            "methods": self.methods,
            "k_values": self.k_values,
            "top_k": self.top_k,
            "renormalize_mean": self.renormalize_mean,
            "seed": self.seed,
        }))
    }
}

fn file_ref(path: &Path) -> Result<Value> {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(json!({ "file": name, "sha256": sha256_file(path)? }))
}
