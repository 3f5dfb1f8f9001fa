//! Listener attribute generation: prompt construction, completion backends,
//! completion parsing and the replay cache.

mod backend;
mod parse;
mod replay;
mod template;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use backend::{
    BackendConfig, BackendKind, CompletionBackend, CompletionRequest, MockBackend, RemoteBackend,
    ReplayOnly, DEFAULT_MAX_TOKENS, DEFAULT_TEMPERATURE, ENV_API_BASE, ENV_API_KEY,
};
pub use parse::parse_completion;
pub use replay::{ReplayCache, ReplayEntry};
pub use template::{build_prompt, PromptTemplate, TemplateStyle, ZERO_SHOT_BODY};

use crate::corpus::GoalSpec;
use crate::{Error, Result};

/// Which side of the goal a description was generated for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GoalRole {
    Positive,
    Negative,
}

impl fmt::Display for GoalRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GoalRole::Positive => "positive",
            GoalRole::Negative => "negative",
        })
    }
}

impl std::str::FromStr for GoalRole {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "positive" => Ok(GoalRole::Positive),
            "negative" => Ok(GoalRole::Negative),
            other => Err(format!("unknown goal role `{other}`")),
        }
    }
}

impl GoalRole {
    pub fn goal_text(self, goal: &GoalSpec) -> &str {
        match self {
            GoalRole::Positive => &goal.goal,
            GoalRole::Negative => &goal.negated_goal,
        }
    }
}

/// A listener description produced by the language model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeDescription {
    pub text: String,
    pub role: GoalRole,
    /// The goal phrase substituted into the prompt.
    pub goal: String,
    pub prompt_hash: String,
    pub raw_completion: String,
}

/// Hex SHA-256 over length-prefixed
/// `(template name, template body hash, x, g, model, temperature, max_tokens)`.
pub fn prompt_hash(template: &PromptTemplate, x: &str, g: &str, config: &BackendConfig) -> String {
    let mut h = Sha256::new();
    let temperature = format!("{:?}", config.temperature);
    let max_tokens = config.max_tokens.to_string();
    for field in [
        "prompt-v1",
        template.name.as_str(),
        template.body_hash().as_str(),
        x,
        g,
        config.model.as_str(),
        temperature.as_str(),
        max_tokens.as_str(),
    ] {
        h.update((field.len() as u64).to_le_bytes());
        h.update(field.as_bytes());
    }
    hex::encode(h.finalize())
}

/// Retry policy for retryable backend failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            initial_backoff: Duration::from_millis(500),
        }
    }
}

/// Prompt → completion → description, with a replay cache in front of the
/// backend.
pub struct AttributeGenerator {
    pub template: PromptTemplate,
    pub config: BackendConfig,
    pub retry: RetryPolicy,
    backend: Box<dyn CompletionBackend>,
    replay: ReplayCache,
    backend_calls: AtomicUsize,
}

impl AttributeGenerator {
    pub fn new(
        template: PromptTemplate,
        config: BackendConfig,
        backend: Box<dyn CompletionBackend>,
        replay: ReplayCache,
    ) -> Result<Self> {
        template.validate()?;
        if backend.kind() != config.kind {
            return Err(Error::InvalidArgument(format!(
                "backend kind {} does not match configured kind {}",
                backend.kind(),
                config.kind
            )));
        }
        Ok(Self {
            template,
            config,
            retry: RetryPolicy::default(),
            backend,
            replay,
            backend_calls: AtomicUsize::new(0),
        })
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// Calls that reached the backend (replay hits excluded).
    pub fn backend_calls(&self) -> usize {
        self.backend_calls.load(Ordering::Relaxed)
    }

    pub fn replay(&self) -> &ReplayCache {
        &self.replay
    }

    pub fn generate(&self, x: &str, goal: &GoalSpec, role: GoalRole) -> Result<AttributeDescription> {
        let g = role.goal_text(goal);
        let prompt = build_prompt(&self.template, x, g)?;
        let hash = prompt_hash(&self.template, x, g, &self.config);

        let raw = match self.replay.get(&hash) {
            Some(entry) => entry.completion,
            None => {
                let completion = self.call_backend(&prompt, &hash)?;
                self.replay.record(ReplayEntry {
                    prompt_hash: hash.clone(),
                    model: self.config.model.clone(),
                    prompt: prompt.clone(),
                    completion: completion.clone(),
                })?;
                completion
            }
        };
        let text = parse_completion(&raw, self.template.style, self.template.answer_marker.as_deref())?;
        Ok(AttributeDescription {
            text,
            role,
            goal: g.to_string(),
            prompt_hash: hash,
            raw_completion: raw,
        })
    }

    fn call_backend(&self, prompt: &str, hash: &str) -> Result<String> {
        let request = CompletionRequest {
            model: &self.config.model,
            prompt,
            temperature: self.config.temperature,
            max_tokens: self.config.max_tokens,
            prompt_hash: hash,
        };
        let mut backoff = self.retry.initial_backoff;
        let attempts = self.retry.max_attempts.max(1);
        for attempt in 1..=attempts {
            self.backend_calls.fetch_add(1, Ordering::Relaxed);
            match self.backend.complete(&request) {
                Ok(text) => return Ok(text),
                Err(e) if e.is_retryable() && attempt < attempts => {
                    log::warn!("completion attempt {attempt}/{attempts} failed: {e}");
                    std::thread::sleep(backoff);
                    backoff *= 2;
                }
                Err(e) => return Err(e),
            }
        }
        unreachable!("loop returns on the last attempt")
    }
}

/// Positive and negative descriptions of one clip.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipAttributes {
    pub positive: AttributeDescription,
    pub negative: AttributeDescription,
}

impl ClipAttributes {
    pub fn get(&self, role: GoalRole) -> &AttributeDescription {
        match role {
            GoalRole::Positive => &self.positive,
            GoalRole::Negative => &self.negative,
        }
    }
}

/// Describe every `(clip_id, transcript)` pair for both goal roles with at
/// most `max_in_flight` concurrent generations. Output is keyed by clip id,
/// so it does not depend on scheduling.
pub fn describe_clips(
    generator: &AttributeGenerator,
    clips: &[(String, String)],
    goal: &GoalSpec,
    max_in_flight: usize,
) -> Result<BTreeMap<String, ClipAttributes>> {
    let next = AtomicUsize::new(0);
    let results = Mutex::new(BTreeMap::new());
    let first_error: Mutex<Option<(usize, Error)>> = Mutex::new(None);
    let workers = max_in_flight.clamp(1, clips.len().max(1));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= clips.len() || first_error.lock().unwrap().is_some() {
                    break;
                }
                let (id, x) = &clips[i];
                let pair = generator
                    .generate(x, goal, GoalRole::Positive)
                    .and_then(|p| Ok((p, generator.generate(x, goal, GoalRole::Negative)?)));
                match pair {
                    Ok((positive, negative)) => {
                        results
                            .lock()
                            .unwrap()
                            .insert(id.clone(), ClipAttributes { positive, negative });
                    }
                    Err(e) => {
                        let mut slot = first_error.lock().unwrap();
                        // keep the error of the lowest clip index for stable messages
                        if slot.as_ref().map_or(true, |(j, _)| i < *j) {
                            *slot = Some((i, e));
                        }
                    }
                }
            });
        }
    });

    if let Some((i, e)) = first_error.into_inner().unwrap() {
        return Err(Error::InClip {
            clip_id: clips[i].0.clone(),
            source: Box::new(e),
        });
    }
    Ok(results.into_inner().unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn generator(backend: MockBackend) -> AttributeGenerator {
        AttributeGenerator::new(
            PromptTemplate::zero_shot(),
            BackendConfig::new(BackendKind::Mock, "mock"),
            Box::new(backend),
            ReplayCache::in_memory(),
        )
        .unwrap()
    }

    #[test]
    fn fixed_mock_response_becomes_description() {
        let g = generator(MockBackend::Fixed("Sam should look sad and sympathetic.".into()));
        let d = g
            .generate("My cat passed away yesterday", &GoalSpec::default(), GoalRole::Positive)
            .unwrap();
        assert_eq!(d.text, "Sam should look sad and sympathetic.");
        assert_eq!(d.goal, "be social");
    }

    #[test]
    fn second_identical_request_is_served_from_cache() {
        let g = generator(MockBackend::lexicon());
        let a = g.generate("hello", &GoalSpec::default(), GoalRole::Positive).unwrap();
        let b = g.generate("hello", &GoalSpec::default(), GoalRole::Positive).unwrap();
        assert_eq!(a, b);
        assert_eq!(g.backend_calls(), 1);
    }

    #[test]
    fn negative_prompt_uses_negated_goal() {
        let g = generator(MockBackend::lexicon());
        let d = g.generate("hello", &GoalSpec::default(), GoalRole::Negative).unwrap();
        assert_eq!(d.goal, "not be social");
        let entry = g.replay().get(&d.prompt_hash).unwrap();
        assert!(entry.prompt.contains("Given that Sam wants to not be social,"));
    }

    #[test]
    fn roles_hash_differently() {
        let t = PromptTemplate::zero_shot();
        let c = BackendConfig::new(BackendKind::Mock, "mock");
        let goal = GoalSpec::default();
        assert_ne!(
            prompt_hash(&t, "x", &goal.goal, &c),
            prompt_hash(&t, "x", &goal.negated_goal, &c)
        );
        let mut hotter = c.clone();
        hotter.temperature = 0.9;
        assert_ne!(prompt_hash(&t, "x", "g", &c), prompt_hash(&t, "x", "g", &hotter));
    }

    #[test]
    fn empty_completion_is_parse_error_with_raw() {
        let g = generator(MockBackend::Fixed("   ".into()));
        let err = g.generate("x", &GoalSpec::default(), GoalRole::Positive).unwrap_err();
        assert!(matches!(err, Error::Parse { ref raw, .. } if raw == "   "));
    }

    #[test]
    fn replay_backend_only_answers_recorded_hashes() {
        let recorder = generator(MockBackend::lexicon());
        let recorded = recorder.generate("x", &GoalSpec::default(), GoalRole::Positive).unwrap();

        let replay = ReplayCache::in_memory();
        replay.record(recorder.replay().get(&recorded.prompt_hash).unwrap()).unwrap();
        let mut config = BackendConfig::new(BackendKind::ReplayCache, "mock");
        config.kind = BackendKind::ReplayCache;
        let g = AttributeGenerator::new(PromptTemplate::zero_shot(), config, Box::new(ReplayOnly), replay).unwrap();
        assert_eq!(g.generate("x", &GoalSpec::default(), GoalRole::Positive).unwrap(), recorded);
        assert!(matches!(
            g.generate("y", &GoalSpec::default(), GoalRole::Positive),
            Err(Error::ReplayMiss(_))
        ));
    }

    struct Flaky {
        failures: AtomicUsize,
    }

    impl CompletionBackend for Flaky {
        fn kind(&self) -> BackendKind {
            BackendKind::Mock
        }
        fn complete(&self, _: &CompletionRequest<'_>) -> Result<String> {
            if self.failures.fetch_sub(1, Ordering::Relaxed) > 0 {
                Err(Error::Backend {
                    message: "connection reset".into(),
                    retryable: true,
                })
            } else {
                Ok("Sam nods.".into())
            }
        }
    }

    fn flaky(failures: usize) -> AttributeGenerator {
        AttributeGenerator::new(
            PromptTemplate::zero_shot(),
            BackendConfig::new(BackendKind::Mock, "mock"),
            Box::new(Flaky {
                failures: AtomicUsize::new(failures),
            }),
            ReplayCache::in_memory(),
        )
        .unwrap()
        .with_retry(RetryPolicy {
            max_attempts: 3,
            initial_backoff: Duration::ZERO,
        })
    }

    #[test]
    fn retries_are_bounded() {
        let ok = flaky(2);
        assert_eq!(ok.generate("x", &GoalSpec::default(), GoalRole::Positive).unwrap().text, "Sam nods.");
        assert_eq!(ok.backend_calls(), 3);

        let fails = flaky(3);
        assert!(fails.generate("x", &GoalSpec::default(), GoalRole::Positive).unwrap_err().is_retryable());
        assert_eq!(fails.backend_calls(), 3);
    }

    #[test]
    fn describe_clips_is_schedule_independent() {
        let clips: Vec<(String, String)> =
            (0..12).map(|i| (format!("c{i:02}"), format!("transcript number {i}"))).collect();
        let one = describe_clips(&generator(MockBackend::lexicon()), &clips, &GoalSpec::default(), 1).unwrap();
        let many = describe_clips(&generator(MockBackend::lexicon()), &clips, &GoalSpec::default(), 5).unwrap();
        assert_eq!(one, many);
        assert_eq!(one.len(), 12);
    }
}
