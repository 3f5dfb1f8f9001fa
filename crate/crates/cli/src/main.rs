use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use listener_cli::stages::{self, Context};
use listener_cli::{run_pipeline, AdapterSource, EmbedderKind, RunConfig, Stage, StageError, StageStatus};
use listener_core::attributes::{BackendKind, GoalRole};
use listener_core::corpus::synthetic::{random_store, SyntheticSpec};
use listener_core::corpus::{load_store, write_store, EmbeddingStore};
use listener_core::keyframes::{compute_keyframes, Strategy};
use listener_core::{Error, Result};

#[derive(Parser)]
#[command(name = "listen", version, about = "Goal-conditioned listener retrieval")]
struct Cli {
    /// Seed for shuffling, training and random baselines.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Re-run stages even when their outputs are up to date.
    #[arg(long, global = true)]
    force: bool,
    /// Only print warnings and errors.
    #[arg(long, short, global = true)]
    quiet: bool,
    /// `key = value` file applied before command-line flags.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate and normalize a store; optionally write a synthetic one first.
    Ingest {
        #[command(flatten)]
        store: StoreArgs,
        #[arg(long, default_value = "ingest.json")]
        out: PathBuf,
        /// Write a random store with this many clips at --store before ingesting.
        #[arg(long)]
        synthetic_clips: Option<usize>,
        #[arg(long, default_value_t = 384)]
        synthetic_frames: usize,
        #[arg(long, default_value_t = 512)]
        synthetic_dim: usize,
        /// Train-split size of the synthetic store (default: about 78%).
        #[arg(long)]
        synthetic_train: Option<usize>,
    },
    /// Select keyframes for every clip.
    Keyframes {
        #[command(flatten)]
        store: StoreArgs,
        #[command(flatten)]
        frames: KeyframeArgs,
        #[arg(long, default_value = "keyframes.json")]
        out: PathBuf,
    },
    /// Generate goal and anti-goal descriptions for every clip.
    Describe {
        #[command(flatten)]
        store: StoreArgs,
        #[command(flatten)]
        lm: DescribeArgs,
        #[command(flatten)]
        embed: EmbedArgs,
        #[arg(long, default_value = "attrs.json")]
        out: PathBuf,
    },
    /// Rank the databank for a free-form transcript.
    Retrieve {
        #[command(flatten)]
        store: StoreArgs,
        #[arg(long, conflicts_with = "transcript_file", required_unless_present = "transcript_file")]
        transcript: Option<String>,
        #[arg(long)]
        transcript_file: Option<PathBuf>,
        /// Describe for the goal (`positive`) or its negation (`negative`).
        #[arg(long, default_value = "positive")]
        role: GoalRole,
        #[arg(long)]
        top_k: Option<usize>,
        /// Precomputed keyframes; computed from --k/--mode when absent.
        #[arg(long)]
        keyframes: Option<PathBuf>,
        #[command(flatten)]
        frames: KeyframeArgs,
        #[command(flatten)]
        lm: DescribeArgs,
        #[command(flatten)]
        embed: EmbedArgs,
        #[command(flatten)]
        scoring: ScoringArgs,
        #[arg(long, default_value = "result.json")]
        out: PathBuf,
    },
    /// Train the embedding adapter on the train split.
    TrainAdapter {
        #[command(flatten)]
        store: StoreArgs,
        #[arg(long)]
        attrs: PathBuf,
        #[arg(long)]
        keyframes: PathBuf,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        /// One training pair per keyframe (`true`) or per clip (`false`).
        #[arg(long)]
        per_keyframe: Option<bool>,
        #[command(flatten)]
        embed: EmbedArgs,
        #[arg(long, default_value = "adapter.bin")]
        out: PathBuf,
    },
    /// Evaluate retrieval methods on the test split.
    Eval {
        #[command(flatten)]
        store: StoreArgs,
        #[arg(long)]
        attrs: PathBuf,
        #[arg(long)]
        keyframes: PathBuf,
        /// Comma-separated: ours_social, ours_rude, no_adapter, uniform_frames, random[:seed].
        #[arg(long)]
        methods: Option<String>,
        #[arg(long)]
        k_values: Option<String>,
        #[command(flatten)]
        scoring: ScoringArgs,
        #[command(flatten)]
        embed: EmbedArgs,
        #[arg(long, default_value = "report.json")]
        out: PathBuf,
        /// Per-query perceptual-loss rows as CSV.
        #[arg(long)]
        plot_data: Option<PathBuf>,
    },
    /// Run every stage, skipping those whose outputs are up to date.
    Pipeline {
        #[command(flatten)]
        store: StoreArgs,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[command(flatten)]
        frames: KeyframeArgs,
        #[command(flatten)]
        lm: DescribeArgs,
        #[command(flatten)]
        embed: EmbedArgs,
        #[command(flatten)]
        scoring: ScoringArgs,
        #[arg(long)]
        methods: Option<String>,
    },
}

#[derive(Args)]
struct StoreArgs {
    /// Store manifest.
    #[arg(long, value_name = "MANIFEST")]
    store: Option<PathBuf>,
}

#[derive(Args)]
struct KeyframeArgs {
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    mode: Option<Strategy>,
    #[arg(long)]
    min_height: Option<f64>,
}

#[derive(Args)]
struct DescribeArgs {
    #[arg(long)]
    goal: Option<String>,
    #[arg(long)]
    negated_goal: Option<String>,
    /// `zero_shot`, `few_shot_cot`, or a template file.
    #[arg(long)]
    template: Option<String>,
    #[arg(long)]
    backend: Option<BackendKind>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    replay_cache: Option<PathBuf>,
    #[arg(long)]
    max_in_flight: Option<usize>,
}

#[derive(Args)]
struct EmbedArgs {
    /// `cache` (precomputed only) or `hashing`.
    #[arg(long)]
    text_embedder: Option<EmbedderKind>,
}

#[derive(Args)]
struct ScoringArgs {
    /// Adapter file, or `none`.
    #[arg(long)]
    adapter: Option<String>,
    #[arg(long)]
    renormalize_mean: bool,
}

impl StoreArgs {
    fn apply(&self, c: &mut RunConfig) {
        if let Some(s) = &self.store {
            c.store = s.clone();
        }
    }
}

impl KeyframeArgs {
    fn apply(&self, c: &mut RunConfig) {
        c.k = self.k.unwrap_or(c.k);
        c.keyframe_mode = self.mode.unwrap_or(c.keyframe_mode);
        c.min_height = self.min_height.or(c.min_height);
    }
}

impl DescribeArgs {
    fn apply(&self, c: &mut RunConfig) {
        if let Some(g) = &self.goal {
            c.goal = g.clone();
        }
        if let Some(g) = &self.negated_goal {
            c.negated_goal = g.clone();
        }
        if let Some(t) = &self.template {
            c.template = t.clone();
        }
        c.backend = self.backend.unwrap_or(c.backend);
        if let Some(m) = &self.model {
            c.model = m.clone();
        }
        if self.endpoint.is_some() {
            c.endpoint = self.endpoint.clone();
        }
        if self.replay_cache.is_some() {
            c.replay_cache = self.replay_cache.clone();
        }
        c.max_in_flight = self.max_in_flight.unwrap_or(c.max_in_flight);
    }
}

impl EmbedArgs {
    fn apply(&self, c: &mut RunConfig) {
        c.text_embedder = self.text_embedder.unwrap_or(c.text_embedder);
    }
}

impl ScoringArgs {
    fn apply(&self, c: &mut RunConfig) -> Result<()> {
        if let Some(a) = &self.adapter {
            c.set("adapter", a, Path::new(""))?;
        }
        c.renormalize_mean |= self.renormalize_mean;
        Ok(())
    }
}

fn stage_of(command: &Command) -> Stage {
    match command {
        Command::Ingest { .. } => Stage::Ingest,
        Command::Keyframes { .. } => Stage::Keyframes,
        Command::Describe { .. } => Stage::Describe,
        Command::Retrieve { .. } => Stage::Retrieve,
        Command::TrainAdapter { .. } => Stage::TrainAdapter,
        Command::Eval { .. } => Stage::Eval,
        Command::Pipeline { .. } => Stage::Config,
    }
}

fn base_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = RunConfig::default();
    if let Some(path) = &cli.config {
        config.apply_file(path)?;
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn load(config: &RunConfig) -> Result<EmbeddingStore> {
    Ok(load_store(&config.store)?.0)
}

/// Non-pipeline adapter choice: `train` has no meaning outside a pipeline.
fn standalone_adapter(ctx: &Context) -> Result<Option<listener_core::adapter::AdapterParams<f32>>> {
    match &ctx.config.adapter {
        AdapterSource::Train => Ok(None),
        _ => stages::resolve_adapter(ctx, Path::new("")),
    }
}

fn run(cli: Cli) -> std::result::Result<(), StageError> {
    let stage = stage_of(&cli.command);
    let wrap = |source| StageError { stage, source };
    let mut config = base_config(&cli).map_err(|source| StageError {
        stage: Stage::Config,
        source,
    })?;

    match cli.command {
        Command::Pipeline {
            store,
            out_dir,
            frames,
            lm,
            embed,
            scoring,
            methods,
        } => {
            store.apply(&mut config);
            if let Some(d) = out_dir {
                config.out_dir = d;
            }
            frames.apply(&mut config);
            lm.apply(&mut config);
            embed.apply(&mut config);
            if let Some(m) = methods {
                config.set("methods", &m, Path::new("")).map_err(wrap)?;
            }
            scoring.apply(&mut config).map_err(wrap)?;
            let summary = run_pipeline(config, cli.force)?;
            for (stage, status) in &summary.stages {
                let word = match status {
                    StageStatus::Ran => "ran",
                    StageStatus::Skipped => "skipped (up to date)",
                    StageStatus::Disabled => "disabled",
                };
                log::info!("{stage}: {word}");
            }
            Ok(())
        }
        Command::Ingest {
            store,
            out,
            synthetic_clips,
            synthetic_frames,
            synthetic_dim,
            synthetic_train,
        } => {
            store.apply(&mut config);
            let result = (|| {
                if let Some(n) = synthetic_clips {
                    let spec = SyntheticSpec {
                        n_clips: n,
                        n_frames: synthetic_frames,
                        image_dim: synthetic_dim,
                        n_train: synthetic_train.unwrap_or(n * 1489 / 1896),
                        seed: config.seed,
                        ..SyntheticSpec::default()
                    };
                    let dir = config.store.parent().unwrap_or(Path::new("."));
                    let name = config.store.file_name().and_then(|n| n.to_str()).unwrap_or("manifest.json");
                    write_store(&random_store(&spec)?, dir, name)?;
                }
                let ctx = Context::new(config)?;
                let (_, report) = stages::ingest(&ctx, &out)?;
                log::info!(
                    "{} clips, {} frames, {} renormalized rows, {} zero rows",
                    report.n_clips,
                    report.n_frames,
                    report.renormalized_rows,
                    report.zero_rows.len()
                );
                Ok(())
            })();
            result.map_err(wrap)
        }
        Command::Keyframes { store, frames, out } => {
            store.apply(&mut config);
            frames.apply(&mut config);
            (|| {
                let ctx = Context::new(config)?;
                stages::keyframes(&ctx, &load(&ctx.config)?, &out).map(drop)
            })()
            .map_err(wrap)
        }
        Command::Describe { store, lm, embed, out } => {
            store.apply(&mut config);
            lm.apply(&mut config);
            embed.apply(&mut config);
            (|| {
                let ctx = Context::new(config)?;
                stages::describe(&ctx, &load(&ctx.config)?, &out).map(drop)
            })()
            .map_err(wrap)
        }
        Command::Retrieve {
            store,
            transcript,
            transcript_file,
            role,
            top_k,
            keyframes,
            frames,
            lm,
            embed,
            scoring,
            out,
        } => {
            store.apply(&mut config);
            frames.apply(&mut config);
            lm.apply(&mut config);
            embed.apply(&mut config);
            config.top_k = top_k.unwrap_or(config.top_k);
            (|| {
                scoring.apply(&mut config)?;
                let transcript = match (transcript, transcript_file) {
                    (Some(t), _) => t,
                    (None, Some(p)) => std::fs::read_to_string(&p)
                        .map_err(|e| Error::io(&p, e))?
                        .trim_end_matches(['\n', '\r'])
                        .to_string(),
                    (None, None) => return Err(Error::InvalidArgument("no transcript given".into())),
                };
                let ctx = Context::new(config)?;
                let store = load(&ctx.config)?;
                let kf = match keyframes {
                    Some(p) => stages::read_keyframes(&p)?,
                    None => compute_keyframes(&store, &ctx.config.keyframe_options())?,
                };
                let adapter = standalone_adapter(&ctx)?;
                let body = stages::retrieve_transcript(&ctx, &store, &transcript, role, &kf, adapter.as_ref(), &out)?;
                for (rank, r) in body.result.ranked.iter().enumerate() {
                    log::info!("{:>3}. {} ({:.6})", rank + 1, r.clip_id, r.score);
                }
                Ok(())
            })()
            .map_err(wrap)
        }
        Command::TrainAdapter {
            store,
            attrs,
            keyframes,
            lr,
            epochs,
            per_keyframe,
            embed,
            out,
        } => {
            store.apply(&mut config);
            embed.apply(&mut config);
            config.learning_rate = lr.unwrap_or(config.learning_rate);
            config.epochs = epochs.unwrap_or(config.epochs);
            config.per_keyframe = per_keyframe.unwrap_or(config.per_keyframe);
            (|| {
                let ctx = Context::new(config)?;
                let store = load(&ctx.config)?;
                let attrs = stages::read_attributes(&attrs)?;
                let kf = stages::read_keyframes(&keyframes)?;
                stages::train_adapter(&ctx, &store, &attrs, &kf, &out).map(drop)
            })()
            .map_err(wrap)
        }
        Command::Eval {
            store,
            attrs,
            keyframes,
            methods,
            k_values,
            scoring,
            embed,
            out,
            plot_data,
        } => {
            store.apply(&mut config);
            embed.apply(&mut config);
            (|| {
                scoring.apply(&mut config)?;
                if let Some(m) = methods {
                    config.set("methods", &m, Path::new(""))?;
                }
                if let Some(k) = k_values {
                    config.set("k_values", &k, Path::new(""))?;
                }
                let ctx = Context::new(config)?;
                let store = load(&ctx.config)?;
                let attrs = stages::read_attributes(&attrs)?;
                let kf = stages::read_keyframes(&keyframes)?;
                let adapter = standalone_adapter(&ctx)?;
                let reports = stages::eval(&ctx, &store, &attrs, &kf, adapter.as_ref(), &out, plot_data.as_deref())?;
                for r in &reports {
                    log::info!("{}: recall {:?}, median rank {}", r.method, r.recall_at, r.median_rank);
                }
                Ok(())
            })()
            .map_err(wrap)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.quiet {
            log::LevelFilter::Warn
        } else {
            log::LevelFilter::Info
        })
        .parse_default_env()
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
