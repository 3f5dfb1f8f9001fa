use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

/// Zero-shot listener prompt. The speaker and listener names are fixed and
/// gender-neutral.
pub const ZERO_SHOT_BODY: &str = "Alex says to Sam: {x}\nQ: What is Alex communicating to Sam? Given that Sam wants to {g}, describe Sam's facial expressions in visual detail.\nA: ";

const FEW_SHOT_COT_TOML: &str = include_str!("../../templates/few_shot_cot.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateStyle {
    ZeroShot,
    FewShotChainOfThought,
}

impl fmt::Display for TemplateStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TemplateStyle::ZeroShot => "zero_shot",
            TemplateStyle::FewShotChainOfThought => "few_shot_chain_of_thought",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub name: String,
    pub body: String,
    pub style: TemplateStyle,
    /// Line prefix introducing the final answer in chain-of-thought output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_marker: Option<String>,
}

impl PromptTemplate {
    pub fn zero_shot() -> Self {
        Self {
            name: "zero_shot".into(),
            body: ZERO_SHOT_BODY.into(),
            style: TemplateStyle::ZeroShot,
            answer_marker: None,
        }
    }

    pub fn few_shot_cot() -> Self {
        Self::from_toml(FEW_SHOT_COT_TOML).expect("bundled few-shot template is valid")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let t: PromptTemplate = toml::from_str(text).map_err(|e| Error::Template {
            name: "<toml>".into(),
            message: e.to_string(),
        })?;
        t.validate()?;
        Ok(t)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Built-in template by name, or a TOML template file path.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        match name_or_path {
            "zero_shot" => Ok(Self::zero_shot()),
            "few_shot_cot" | "few_shot_chain_of_thought" => Ok(Self::few_shot_cot()),
            path => Self::from_file(Path::new(path)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for placeholder in ["{x}", "{g}"] {
            let count = self.body.matches(placeholder).count();
            if count != 1 {
                return Err(self.error(format!(
                    "placeholder {placeholder} must appear exactly once, found {count}"
                )));
            }
        }
        if self.style == TemplateStyle::FewShotChainOfThought
            && self.answer_marker.as_deref().map_or(true, |m| m.trim().is_empty())
        {
            return Err(self.error("chain-of-thought templates need an answer_marker".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 of the template body.
    pub fn body_hash(&self) -> String {
        hex::encode(Sha256::digest(self.body.as_bytes()))
    }

    fn error(&self, message: String) -> Error {
        Error::Template {
            name: self.name.clone(),
            message,
        }
    }
}

/// Substitute the transcript `x` and goal `g` byte-for-byte.
///
/// Substitution is a single left-to-right pass, so placeholder-like text
/// inside `x` or `g` is never expanded.
pub fn build_prompt(template: &PromptTemplate, x: &str, g: &str) -> Result<String> {
    template.validate()?;
    if x.is_empty() || g.is_empty() {
        return Err(Error::InvalidArgument("transcript and goal must be non-empty".into()));
    }
    let body = template.body.as_str();
    let mut out = String::with_capacity(body.len() + x.len() + g.len());
    let mut rest = body;
    while let Some(pos) = rest.find('{') {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        if let Some(after) = tail.strip_prefix("{x}") {
            out.push_str(x);
            rest = after;
        } else if let Some(after) = tail.strip_prefix("{g}") {
            out.push_str(g);
            rest = after;
        } else {
            out.push('{');
            rest = &tail[1..];
        }
    }
    out.push_str(rest);
    Ok(out)
}

impl FromStr for TemplateStyle {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zero_shot" => Ok(TemplateStyle::ZeroShot),
            "few_shot_chain_of_thought" | "few_shot_cot" => Ok(TemplateStyle::FewShotChainOfThought),
            other => Err(format!("unknown template style `{other}`")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_placeholder_is_an_error() {
        let t = PromptTemplate {
            body: "Alex says to Sam: {x}\nA: ".into(),
            ..PromptTemplate::zero_shot()
        };
        assert!(build_prompt(&t, "hi", "be social").is_err());
    }

    #[test]
    fn duplicate_placeholder_is_an_error() {
        let t = PromptTemplate {
            body: "{x} {x} {g}".into(),
            ..PromptTemplate::zero_shot()
        };
        assert!(t.validate().is_err());
    }

    #[test]
    fn newline_in_transcript_is_verbatim() {
        let x = "first line\nsecond line";
        let p = build_prompt(&PromptTemplate::zero_shot(), x, "be social").unwrap();
        let expected = "Alex says to Sam: first line\nsecond line\nQ: What is Alex communicating to Sam? Given that Sam wants to be social, describe Sam's facial expressions in visual detail.\nA: ";
        assert_eq!(p, expected);
    }

    #[test]
    fn placeholders_inside_values_are_not_expanded() {
        let p = build_prompt(&PromptTemplate::zero_shot(), "say {g} now", "be {x}").unwrap();
        assert!(p.starts_with("Alex says to Sam: say {g} now\n"));
        assert!(p.contains("wants to be {x},"));
    }

    #[test]
    fn bundled_few_shot_template_is_valid() {
        let t = PromptTemplate::few_shot_cot();
        assert_eq!(t.style, TemplateStyle::FewShotChainOfThought);
        assert_eq!(t.answer_marker.as_deref(), Some("Therefore:"));
        let p = build_prompt(&t, "\"hello\"", "be social").unwrap();
        assert!(p.ends_with("Given that Sam wants to be social, describe Sam's facial expressions in visual detail.\nA: "));
    }

    #[test]
    fn empty_inputs_rejected() {
        assert!(build_prompt(&PromptTemplate::zero_shot(), "", "g").is_err());
        assert!(build_prompt(&PromptTemplate::zero_shot(), "x", "").is_err());
    }
}
