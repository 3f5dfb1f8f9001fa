//! One function per pipeline stage. Each reads explicit inputs, writes its
//! artifacts atomically and embeds the seed and configuration echo.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use listener_core::adapter::{
    build_training_pairs, read_adapter, train, write_adapter, AdapterFileMeta, AdapterParams, TrainConfig,
};
use listener_core::attributes::{
    describe_clips, AttributeDescription, AttributeGenerator, BackendKind, ClipAttributes, CompletionBackend,
    GoalRole, MockBackend, PromptTemplate, RemoteBackend, ReplayCache, ReplayOnly,
};
use listener_core::corpus::{
    embed_text, load_store, EmbeddingStore, HashingEmbedder, LoadReport, NoEmbedder, Split, TextEmbedder,
};
use listener_core::eval::{perceptual_loss, run_method, EvalInputs, EvalReport};
use listener_core::keyframes::{compute_keyframes, KeyframeMap, KeyframeMode, KeyframeSet, Strategy};
use listener_core::retrieval::{retrieve, Query, RetrievalResult};
use listener_core::scoring::{ClipIndex, ScoringOptions};
use listener_core::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::artifact::{read_json, sha256_json, write_atomic, write_json};
use crate::config::{AdapterSource, EmbedderKind, RunConfig};

/// Configuration shared by every stage of one run.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: RunConfig,
    pub echo: Value,
    pub config_sha256: String,
}

impl Context {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let echo = config.echo()?;
        let config_sha256 = sha256_json(&echo);
        Ok(Self {
            config,
            echo,
            config_sha256,
        })
    }

    fn wrap<T>(&self, body: T) -> Artifact<T> {
        Artifact {
            seed: self.config.seed,
            config: self.echo.clone(),
            body,
        }
    }

    pub fn embedder(&self, store: &EmbeddingStore) -> Box<dyn TextEmbedder> {
        match self.config.text_embedder {
            EmbedderKind::Cache => Box::new(NoEmbedder),
            EmbedderKind::Hashing => Box::new(HashingEmbedder::new(store.image_dim())),
        }
    }

    pub fn scoring(&self) -> ScoringOptions {
        ScoringOptions {
            renormalize_mean: self.config.renormalize_mean,
        }
    }

    pub fn generator(&self) -> Result<AttributeGenerator> {
        let template = PromptTemplate::resolve(&self.config.template)?;
        let backend: Box<dyn CompletionBackend> = match self.config.backend {
            BackendKind::Mock => Box::new(MockBackend::Lexicon {
                answer_marker: template.answer_marker.clone(),
            }),
            BackendKind::ReplayCache => Box::new(ReplayOnly),
            BackendKind::Remote => Box::new(RemoteBackend::from_env(self.config.endpoint.as_deref())?),
        };
        let replay = ReplayCache::open(&self.config.replay_path())?;
        AttributeGenerator::new(template, self.config.backend_config(), backend, replay)
    }
}

/// Every JSON artifact: the seed, the configuration echo, then the payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact<T> {
    pub seed: u64,
    pub config: Value,
    #[serde(flatten)]
    pub body: T,
}

#[derive(Debug, Clone, Serialize)]
pub struct IngestBody {
    pub image_dim: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub load: LoadReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub indices: Vec<usize>,
    pub mode: KeyframeMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyframesBody {
    pub keyframes: BTreeMap<String, FrameEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributesBody {
    pub attributes: BTreeMap<String, ClipAttributes>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalsBody {
    pub results: Vec<RetrievalResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRetrievalBody {
    pub description: AttributeDescription,
    pub result: RetrievalResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBody {
    pub reports: Vec<EvalReport>,
}

pub fn split_ids(store: &EmbeddingStore, split: Split) -> Vec<String> {
    store
        .clips()
        .filter(|c| c.record.split == split)
        .map(|c| c.record.clip_id.clone())
        .collect()
}

pub fn ingest(ctx: &Context, out: &Path) -> Result<(EmbeddingStore, LoadReport)> {
    let (store, report) = load_store(&ctx.config.store)?;
    for z in &report.zero_rows {
        log::warn!("clip `{}` frame {} has a zero image embedding", z.clip_id, z.frame);
    }
    let body = IngestBody {
        image_dim: store.image_dim(),
        n_train: split_ids(&store, Split::Train).len(),
        n_test: split_ids(&store, Split::Test).len(),
        load: report.clone(),
    };
    write_json(out, &ctx.wrap(body))?;
    Ok((store, report))
}

pub fn keyframes(ctx: &Context, store: &EmbeddingStore, out: &Path) -> Result<KeyframeMap> {
    let map = compute_keyframes(store, &ctx.config.keyframe_options())?;
    let fallbacks = map
        .values()
        .filter(|s| s.mode == KeyframeMode::FallbackUniform)
        .count();
    if fallbacks > 0 {
        log::info!("{fallbacks} clip(s) had no expression peak and use uniform frames");
    }
    let body = KeyframesBody {
        keyframes: map
            .iter()
            .map(|(id, s)| {
                (
                    id.clone(),
                    FrameEntry {
                        indices: s.indices.clone(),
                        mode: s.mode,
                    },
                )
            })
            .collect(),
    };
    write_json(out, &ctx.wrap(body))?;
    Ok(map)
}

pub fn read_keyframes(path: &Path) -> Result<KeyframeMap> {
    let art: Artifact<KeyframesBody> = read_json(path)?;
    Ok(art
        .body
        .keyframes
        .into_iter()
        .map(|(id, e)| {
            let set = KeyframeSet {
                clip_id: id.clone(),
                indices: e.indices,
                mode: e.mode,
            };
            (id, set)
        })
        .collect())
}

/// Describe every clip for both goal roles, then make sure every description
/// has a text embedding so later stages can run from the cache alone.
pub fn describe(ctx: &Context, store: &EmbeddingStore, out: &Path) -> Result<BTreeMap<String, ClipAttributes>> {
    let generator = ctx.generator()?;
    let clips: Vec<(String, String)> = store
        .clips()
        .map(|c| (c.record.clip_id.clone(), c.record.transcript.clone()))
        .collect();
    let attrs = describe_clips(&generator, &clips, &ctx.config.goal_spec()?, ctx.config.max_in_flight)?;
    log::info!(
        "described {} clips ({} backend calls, {} cached completions)",
        attrs.len(),
        generator.backend_calls(),
        generator.replay().len()
    );
    let embedder = ctx.embedder(store);
    for (id, a) in &attrs {
        for d in [&a.positive, &a.negative] {
            embed_text(store, &d.text, embedder.as_ref()).map_err(|e| Error::InClip {
                clip_id: id.clone(),
                source: Box::new(e),
            })?;
        }
    }
    write_json(
        out,
        &ctx.wrap(AttributesBody {
            attributes: attrs.clone(),
        }),
    )?;
    Ok(attrs)
}

pub fn read_attributes(path: &Path) -> Result<BTreeMap<String, ClipAttributes>> {
    Ok(read_json::<Artifact<AttributesBody>>(path)?.body.attributes)
}

pub fn train_adapter(
    ctx: &Context,
    store: &EmbeddingStore,
    attrs: &BTreeMap<String, ClipAttributes>,
    keyframes: &KeyframeMap,
    out: &Path,
) -> Result<AdapterParams<f32>> {
    let train_ids = split_ids(store, Split::Train);
    let embedder = ctx.embedder(store);
    let pairs = build_training_pairs::<f64>(
        store,
        attrs,
        keyframes,
        &train_ids,
        ctx.config.per_keyframe,
        embedder.as_ref(),
    )?;
    let config = TrainConfig {
        learning_rate: ctx.config.learning_rate,
        epochs: ctx.config.epochs,
        seed: ctx.config.seed,
        per_keyframe: ctx.config.per_keyframe,
        ..TrainConfig::default()
    };
    let outcome = train(&pairs, &config)?;
    log::info!(
        "trained adapter on {} pairs from {} clips; loss trace {:?}",
        pairs.len(),
        train_ids.len(),
        outcome.loss_trace
    );
    let params: AdapterParams<f32> = outcome.params.cast();
    let meta = AdapterFileMeta::new(
        params.dim,
        outcome.loss_trace,
        serde_json::json!({ "seed": ctx.config.seed, "config": ctx.echo }),
    );

    let partial = out.with_file_name(format!(".{}.partial", out.file_name().unwrap_or_default().to_string_lossy()));
    let result = write_adapter(&partial, &params, &meta).and_then(|()| {
        fs::rename(listener_core::adapter::sidecar_path(&partial), listener_core::adapter::sidecar_path(out))
            .map_err(|e| Error::io(out, e))?;
        fs::rename(&partial, out).map_err(|e| Error::io(out, e))
    });
    if result.is_err() {
        let _ = fs::remove_file(&partial);
        let _ = fs::remove_file(listener_core::adapter::sidecar_path(&partial));
    }
    result?;
    Ok(params)
}

/// The adapter a run scores with, if any.
pub fn resolve_adapter(ctx: &Context, trained: &Path) -> Result<Option<AdapterParams<f32>>> {
    let path = match &ctx.config.adapter {
        AdapterSource::None => return Ok(None),
        AdapterSource::Train => trained.to_path_buf(),
        AdapterSource::File(p) => p.clone(),
    };
    Ok(Some(read_adapter(&path)?.0))
}

/// Top-`top_k` retrieval for every test-split clip's goal description.
pub fn retrieve_queries(
    ctx: &Context,
    store: &EmbeddingStore,
    attrs: &BTreeMap<String, ClipAttributes>,
    keyframes: &KeyframeMap,
    adapter: Option<&AdapterParams<f32>>,
    out: &Path,
) -> Result<Vec<RetrievalResult>> {
    let index = ClipIndex::build(store, keyframes, adapter, ctx.scoring())?;
    let embedder = ctx.embedder(store);
    let results = split_ids(store, Split::Test)
        .into_iter()
        .map(|id| {
            let attr = attrs
                .get(&id)
                .ok_or_else(|| Error::MissingDescriptions(vec![id.clone()]))?;
            let text = embed_text(store, &attr.positive.text, embedder.as_ref())?;
            retrieve(
                &index,
                &text,
                Query::Clip(id.clone()),
                GoalRole::Positive,
                ctx.config.top_k,
                Some(&id),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    write_json(
        out,
        &ctx.wrap(RetrievalsBody {
            results: results.clone(),
        }),
    )?;
    Ok(results)
}

/// Describe a free-form transcript and rank the databank against it.
pub fn retrieve_transcript(
    ctx: &Context,
    store: &EmbeddingStore,
    transcript: &str,
    role: GoalRole,
    keyframes: &KeyframeMap,
    adapter: Option<&AdapterParams<f32>>,
    out: &Path,
) -> Result<TranscriptRetrievalBody> {
    let generator = ctx.generator()?;
    let description = generator.generate(transcript, &ctx.config.goal_spec()?, role)?;
    let embedder = ctx.embedder(store);
    let text = embed_text(store, &description.text, embedder.as_ref())?;
    let index = ClipIndex::build(store, keyframes, adapter, ctx.scoring())?;
    let result = retrieve(
        &index,
        &text,
        Query::Transcript(transcript.to_string()),
        role,
        ctx.config.top_k,
        None,
    )?;
    let body = TranscriptRetrievalBody { description, result };
    write_json(out, &ctx.wrap(body.clone()))?;
    Ok(body)
}

#[derive(Debug, Serialize)]
struct PlotRow<'a> {
    method: &'a str,
    space: &'a str,
    query: &'a str,
    prediction: &'a str,
    rank: usize,
    loss: f64,
}

pub fn eval(
    ctx: &Context,
    store: &EmbeddingStore,
    attrs: &BTreeMap<String, ClipAttributes>,
    keyframes: &KeyframeMap,
    adapter: Option<&AdapterParams<f32>>,
    out: &Path,
    plot_data: Option<&Path>,
) -> Result<Vec<EvalReport>> {
    let uniform = compute_keyframes(
        store,
        &listener_core::keyframes::KeyframeOptions {
            strategy: Strategy::Uniform,
            ..ctx.config.keyframe_options()
        },
    )?;
    let queries = split_ids(store, Split::Test);
    let goal = ctx.config.goal_spec()?;
    let embedder = ctx.embedder(store);
    let inputs = EvalInputs {
        store,
        attrs,
        keyframes,
        uniform_keyframes: &uniform,
        adapter,
        embedder: embedder.as_ref(),
        queries: &queries,
        goal: &goal,
        k_values: &ctx.config.k_values,
        scoring: ctx.scoring(),
    };

    let mut reports = Vec::new();
    let mut csv = csv::Writer::from_writer(format!("# seed={} config_sha256={}\n", ctx.config.seed, ctx.config_sha256).into_bytes());
    for method in ctx.config.parsed_methods()? {
        let outcome = run_method(&inputs, method)?;
        for q in &outcome.queries {
            for (space, loss) in perceptual_loss(store, &q.prediction, &q.query)? {
                csv.serialize(PlotRow {
                    method: &outcome.report.method,
                    space: &space,
                    query: &q.query,
                    prediction: &q.prediction,
                    rank: q.rank,
                    loss,
                })
                .map_err(|e| Error::InvalidArgument(format!("plot data: {e}")))?;
            }
        }
        reports.push(outcome.report);
    }

    write_json(
        out,
        &ctx.wrap(ReportBody {
            reports: reports.clone(),
        }),
    )?;
    if let Some(path) = plot_data {
        let bytes = csv
            .into_inner()
            .map_err(|e| Error::InvalidArgument(format!("plot data: {e}")))?;
        write_atomic(path, &bytes)?;
    }
    Ok(reports)
}

/// Paths of the artifacts a pipeline run writes under `out_dir`.
#[derive(Debug, Clone)]
pub struct Outputs {
    pub ingest: PathBuf,
    pub keyframes: PathBuf,
    pub attributes: PathBuf,
    pub adapter: PathBuf,
    pub retrievals: PathBuf,
    pub report: PathBuf,
    pub plot_data: PathBuf,
}

impl Outputs {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            ingest: dir.join("ingest.json"),
            keyframes: dir.join("keyframes.json"),
            attributes: dir.join("attributes.json"),
            adapter: dir.join("adapter.bin"),
            retrievals: dir.join("retrievals.json"),
            report: dir.join("report.json"),
            plot_data: dir.join("plot.csv"),
        }
    }
}
