//! Text-completion backends.

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::{Error, Result};

pub const DEFAULT_TEMPERATURE: f64 = 0.8;
pub const DEFAULT_MAX_TOKENS: u32 = 1000;
pub const ENV_API_BASE: &str = "LLM_API_BASE";
pub const ENV_API_KEY: &str = "LLM_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Remote,
    ReplayCache,
    Mock,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::Remote => "remote",
            BackendKind::ReplayCache => "replay",
            BackendKind::Mock => "mock",
        })
    }
}

impl FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "remote" => Ok(BackendKind::Remote),
            "replay" | "replay_cache" => Ok(BackendKind::ReplayCache),
            "mock" => Ok(BackendKind::Mock),
            other => Err(format!("unknown backend `{other}` (expected remote|replay|mock)")),
        }
    }
}

/// Decoding configuration; part of every prompt hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
}

impl BackendConfig {
    pub fn new(kind: BackendKind, model: impl Into<String>) -> Self {
        Self {
            kind,
            model: model.into(),
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
            endpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompletionRequest<'a> {
    pub model: &'a str,
    pub prompt: &'a str,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(skip)]
    pub prompt_hash: &'a str,
}

pub trait CompletionBackend: Send + Sync {
    fn kind(&self) -> BackendKind;

    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String>;
}

/// Answers nothing; every request that reaches it is a replay-cache miss.
#[derive(Debug, Default, Clone, Copy)]
pub struct ReplayOnly;

impl CompletionBackend for ReplayOnly {
    fn kind(&self) -> BackendKind {
        BackendKind::ReplayCache
    }

    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String> {
        Err(Error::ReplayMiss(request.prompt_hash.to_string()))
    }
}

/// Deterministic offline backend.
#[derive(Debug, Clone)]
pub enum MockBackend {
    /// Always returns the same completion.
    Fixed(String),
    /// Picks a canned description from the goal clause of the prompt and a
    /// hash of the whole prompt. With a marker, the answer is wrapped in a
    /// short chain-of-thought ending in `<marker> <answer>`.
    Lexicon { answer_marker: Option<String> },
}

const POSITIVE_LEXICON: &[&str] = &[
    "Sam should look sad and sympathetic, with softened eyes and a gentle frown.",
    "Sam should smile warmly, nodding with raised cheeks and relaxed brows.",
    "Sam should look attentive and concerned, brows drawn together and lips pressed.",
    "Sam should laugh openly, eyes crinkled and mouth wide.",
    "Sam should look surprised and delighted, with raised eyebrows and an open smile.",
    "Sam should keep a calm, encouraging expression with steady eye contact.",
];

const NEGATIVE_LEXICON: &[&str] = &[
    "Sam should look bored, with a flat mouth and eyes drifting away.",
    "Sam should smirk and roll their eyes.",
    "Sam should look amused at the wrong moment, grinning widely.",
    "Sam should scowl with narrowed eyes and a tight jaw.",
    "Sam should yawn and stare blankly past Alex.",
    "Sam should look annoyed, lips pursed and brows lowered.",
];

impl MockBackend {
    pub fn lexicon() -> Self {
        MockBackend::Lexicon {
            answer_marker: None,
        }
    }

    fn lexicon_answer(prompt: &str) -> &'static str {
        let goal = prompt
            .rfind("Given that Sam wants to ")
            .map(|at| &prompt[at + "Given that Sam wants to ".len()..])
            .and_then(|tail| tail.split(',').next())
            .unwrap_or("");
        let negative = goal.starts_with("not ") || goal.contains(" not ");
        let lexicon = if negative { NEGATIVE_LEXICON } else { POSITIVE_LEXICON };
        let digest = <sha2::Sha256 as sha2::Digest>::digest(prompt.as_bytes());
        lexicon[u64::from_le_bytes(digest[..8].try_into().unwrap()) as usize % lexicon.len()]
    }
}

impl CompletionBackend for MockBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Mock
    }

    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String> {
        Ok(match self {
            MockBackend::Fixed(text) => text.clone(),
            MockBackend::Lexicon { answer_marker } => {
                let answer = Self::lexicon_answer(request.prompt);
                match answer_marker {
                    Some(m) => format!(
                        " Alex is telling Sam something personal.\nA listener would normally react to it.\n{m} {answer}"
                    ),
                    None => format!(" {answer}"),
                }
            }
        })
    }
}

/// HTTP backend speaking the minimal completion protocol:
/// `POST {base}/completions {model, prompt, temperature, max_tokens}` answered
/// by `{text}`. OpenAI-style `{choices: [{text}]}` bodies are accepted too.
pub struct RemoteBackend {
    base: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl fmt::Debug for RemoteBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RemoteBackend").field("base", &self.base).finish_non_exhaustive()
    }
}

impl RemoteBackend {
    pub fn new(base: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            base: base.into().trim_end_matches('/').to_string(),
            api_key,
            agent,
        }
    }

    /// Endpoint from `endpoint` or `LLM_API_BASE`, key from `LLM_API_KEY`.
    pub fn from_env(endpoint: Option<&str>) -> Result<Self> {
        let base = match endpoint {
            Some(e) => e.to_string(),
            None => std::env::var(ENV_API_BASE).map_err(|_| Error::Backend {
                message: format!("{ENV_API_BASE} is not set"),
                retryable: false,
            })?,
        };
        Ok(Self::new(base, std::env::var(ENV_API_KEY).ok(), Duration::from_secs(120)))
    }

    pub fn url(&self) -> String {
        format!("{}/completions", self.base)
    }
}

impl CompletionBackend for RemoteBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Remote
    }

    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String> {
        let body = json!({
            "model": request.model,
            "prompt": request.prompt,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let mut req = self.agent.post(&self.url());
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(&body).map_err(|e| Error::Backend {
            message: e.to_string(),
            retryable: true,
        })?;
        let status = resp.status().as_u16();
        if status != 200 {
            return Err(Error::Backend {
                message: format!("HTTP {status} from {}", self.url()),
                retryable: status == 429 || status >= 500,
            });
        }
        let value: serde_json::Value = resp.body_mut().read_json().map_err(|e| Error::Backend {
            message: format!("malformed response body: {e}"),
            retryable: false,
        })?;
        value
            .get("text")
            .or_else(|| value.pointer("/choices/0/text"))
            .and_then(|t| t.as_str())
            .map(str::to_string)
            .ok_or_else(|| Error::Backend {
                message: "response has neither `text` nor `choices[0].text`".into(),
                retryable: false,
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(prompt: &str) -> CompletionRequest<'_> {
        CompletionRequest {
            model: "m",
            prompt,
            temperature: 0.8,
            max_tokens: 10,
            prompt_hash: "h",
        }
    }

    #[test]
    fn lexicon_reads_goal_polarity() {
        let mock = MockBackend::lexicon();
        let pos = mock.complete(&req("Given that Sam wants to be social, describe")).unwrap();
        let neg = mock.complete(&req("Given that Sam wants to not be social, describe")).unwrap();
        assert!(POSITIVE_LEXICON.contains(&pos.trim()));
        assert!(NEGATIVE_LEXICON.contains(&neg.trim()));
    }

    #[test]
    fn replay_only_misses() {
        assert!(matches!(ReplayOnly.complete(&req("p")), Err(Error::ReplayMiss(h)) if h == "h"));
    }

    #[test]
    fn kinds_parse() {
        assert_eq!("replay".parse::<BackendKind>().unwrap(), BackendKind::ReplayCache);
        assert!("gpt".parse::<BackendKind>().is_err());
    }
}
