//! End-to-end run: ingest, keyframes, describe, train-adapter, retrieve, eval.

use std::fmt;
use std::fs;
use std::path::PathBuf;

use listener_core::adapter::{sidecar_path, AdapterParams};
use listener_core::attributes::ClipAttributes;
use listener_core::corpus::EmbeddingStore;
use listener_core::keyframes::KeyframeMap;
use listener_core::{Error, Result};
use std::collections::BTreeMap;

use crate::artifact::{is_up_to_date, record_path, write_json, Input, StageRecord};
use crate::config::{AdapterSource, RunConfig};
use crate::stages::{self, Context, Outputs};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Ingest,
    Keyframes,
    Describe,
    TrainAdapter,
    Retrieve,
    Eval,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "config",
            Stage::Ingest => "ingest",
            Stage::Keyframes => "keyframes",
            Stage::Describe => "describe",
            Stage::TrainAdapter => "train-adapter",
            Stage::Retrieve => "retrieve",
            Stage::Eval => "eval",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStatus {
    Ran,
    Skipped,
    /// Not part of this configuration (e.g. training with `adapter = none`).
    Disabled,
}

#[derive(Debug, thiserror::Error)]
#[error("stage `{stage}` failed: {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineSummary {
    pub stages: Vec<(Stage, StageStatus)>,
    pub outputs: Vec<PathBuf>,
}

impl PipelineSummary {
    pub fn all_skipped(&self) -> bool {
        self.stages.iter().all(|(_, s)| *s != StageStatus::Ran)
    }
}

/// Loaded once, on the first stage that actually runs.
struct Loaded {
    store: Option<EmbeddingStore>,
}

impl Loaded {
    fn store(&mut self, ctx: &Context) -> Result<&EmbeddingStore> {
        if self.store.is_none() {
            self.store = Some(listener_core::corpus::load_store(&ctx.config.store)?.0);
        }
        Ok(self.store.as_ref().expect("just loaded"))
    }
}

pub fn run_pipeline(config: RunConfig, force: bool) -> std::result::Result<PipelineSummary, StageError> {
    let fail = |stage| move |source| StageError { stage, source };
    let ctx = Context::new(config).map_err(fail(Stage::Config))?;
    let cfg = &ctx.config;
    for path in [&cfg.store]
        .into_iter()
        .chain(match &cfg.adapter {
            AdapterSource::File(p) => Some(p),
            _ => None,
        })
    {
        if !path.is_file() {
            return Err(StageError {
                stage: Stage::Config,
                source: Error::InvalidArgument(format!("{} does not exist", path.display())),
            });
        }
    }
    fs::create_dir_all(&cfg.out_dir).map_err(|e| StageError {
        stage: Stage::Config,
        source: Error::io(&cfg.out_dir, e),
    })?;

    let out = Outputs::in_dir(&cfg.out_dir);
    let store_input = Input::store(&cfg.store).map_err(fail(Stage::Ingest))?;
    let kf_input = Input::file("keyframes", &out.keyframes);
    let attrs_input = Input::file("attributes", &out.attributes);
    let adapter_input = match &cfg.adapter {
        AdapterSource::None => None,
        AdapterSource::Train => Some(Input::file("adapter", &out.adapter)),
        AdapterSource::File(p) => Some(Input::file("adapter", p)),
    };

    let mut loaded = Loaded { store: None };
    let mut summary = PipelineSummary {
        stages: Vec::new(),
        outputs: Vec::new(),
    };
    let mut run = |stage: Stage,
                   inputs: Vec<Input>,
                   outputs: Vec<PathBuf>,
                   body: Option<&mut dyn FnMut(&mut Loaded) -> Result<()>>|
     -> std::result::Result<(), StageError> {
        let status = match body {
            Some(body) => run_stage(&ctx, force, &mut loaded, stage, &inputs, &outputs, body)?,
            None => StageStatus::Disabled,
        };
        summary.outputs.extend(outputs);
        summary.stages.push((stage, status));
        Ok(())
    };

    run(Stage::Ingest, vec![store_input.clone()], vec![out.ingest.clone()], Some(&mut |l| {
        let (store, _) = stages::ingest(&ctx, &out.ingest)?;
        l.store = Some(store);
        Ok(())
    }))?;

    run(Stage::Keyframes, vec![store_input.clone()], vec![out.keyframes.clone()], Some(&mut |l| {
        stages::keyframes(&ctx, l.store(&ctx)?, &out.keyframes).map(drop)
    }))?;

    run(Stage::Describe, vec![store_input.clone()], vec![out.attributes.clone()], Some(&mut |l| {
        stages::describe(&ctx, l.store(&ctx)?, &out.attributes).map(drop)
    }))?;

    let read_inputs = |l: &mut Loaded| -> Result<(KeyframeMap, BTreeMap<String, ClipAttributes>)> {
        l.store(&ctx)?;
        Ok((
            stages::read_keyframes(&out.keyframes)?,
            stages::read_attributes(&out.attributes)?,
        ))
    };

    if cfg.adapter == AdapterSource::Train {
        let outputs = vec![out.adapter.clone(), sidecar_path(&out.adapter)];
        run(
            Stage::TrainAdapter,
            vec![store_input.clone(), kf_input.clone(), attrs_input.clone()],
            outputs,
            Some(&mut |l| {
                let (kf, attrs) = read_inputs(l)?;
                stages::train_adapter(&ctx, l.store(&ctx)?, &attrs, &kf, &out.adapter).map(drop)
            }),
        )?;
    } else {
        run(Stage::TrainAdapter, Vec::new(), Vec::new(), None)?;
    }

    let scoring_inputs: Vec<Input> = [store_input, kf_input, attrs_input]
        .into_iter()
        .chain(adapter_input)
        .collect();
    let adapter = |_: &mut Loaded| -> Result<Option<AdapterParams<f32>>> { stages::resolve_adapter(&ctx, &out.adapter) };

    run(Stage::Retrieve, scoring_inputs.clone(), vec![out.retrievals.clone()], Some(&mut |l| {
        let (kf, attrs) = read_inputs(l)?;
        let a = adapter(l)?;
        stages::retrieve_queries(&ctx, l.store(&ctx)?, &attrs, &kf, a.as_ref(), &out.retrievals).map(drop)
    }))?;

    run(
        Stage::Eval,
        scoring_inputs,
        vec![out.report.clone(), out.plot_data.clone()],
        Some(&mut |l| {
            let (kf, attrs) = read_inputs(l)?;
            let a = adapter(l)?;
            stages::eval(
                &ctx,
                l.store(&ctx)?,
                &attrs,
                &kf,
                a.as_ref(),
                &out.report,
                Some(&out.plot_data),
            )
            .map(drop)
        }),
    )?;

    drop(run);
    Ok(summary)
}

fn run_stage(
    ctx: &Context,
    force: bool,
    loaded: &mut Loaded,
    stage: Stage,
    inputs: &[Input],
    outputs: &[PathBuf],
    body: &mut dyn FnMut(&mut Loaded) -> Result<()>,
) -> std::result::Result<StageStatus, StageError> {
    let record = record_path(&ctx.config.out_dir, &stage.to_string());
    if !force && is_up_to_date(&record, &ctx.config_sha256, inputs, outputs) {
        log::info!("{stage}: up to date, skipped");
        return Ok(StageStatus::Skipped);
    }
    log::info!("{stage}: running");
    let result = body(loaded).and_then(|()| {
        let rec = StageRecord::capture(&stage.to_string(), &ctx.config_sha256, inputs, outputs)?;
        write_json(&record, &rec)
    });
    if let Err(source) = result {
        for p in outputs.iter().chain([&record]) {
            let _ = fs::remove_file(p);
        }
        return Err(StageError { stage, source });
    }
    Ok(StageStatus::Ran)
}
