use super::template::TemplateStyle;
use crate::{Error, Result};

/// Extract the listener description from a raw completion.
///
/// Zero-shot completions are used whole (trimmed). Chain-of-thought
/// completions yield the text following the last line that starts with
/// `marker`.
pub fn parse_completion(raw: &str, style: TemplateStyle, marker: Option<&str>) -> Result<String> {
    let parse_err = |message: &str| Error::Parse {
        message: message.to_string(),
        raw: raw.to_string(),
    };
    if raw.trim().is_empty() {
        return Err(parse_err("empty completion"));
    }
    let text = match style {
        TemplateStyle::ZeroShot => raw.trim().to_string(),
        TemplateStyle::FewShotChainOfThought => {
            let marker = marker
                .filter(|m| !m.is_empty())
                .ok_or_else(|| parse_err("chain-of-thought template has no answer marker"))?;
            let lines: Vec<&str> = raw.lines().collect();
            let (at, line) = lines
                .iter()
                .enumerate()
                .rev()
                .find(|(_, l)| l.trim_start().starts_with(marker))
                .ok_or_else(|| parse_err(&format!("no line starting with `{marker}`")))?;
            let mut answer = line.trim_start()[marker.len()..].to_string();
            for extra in &lines[at + 1..] {
                answer.push('\n');
                answer.push_str(extra);
            }
            answer.trim().to_string()
        }
    };
    if text.is_empty() {
        return Err(parse_err("completion contains no description"));
    }
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const COT: TemplateStyle = TemplateStyle::FewShotChainOfThought;

    #[test]
    fn zero_shot_trims() {
        assert_eq!(
            parse_completion("  Sam should smile.  ", TemplateStyle::ZeroShot, None).unwrap(),
            "Sam should smile."
        );
    }

    #[test]
    fn chain_of_thought_takes_last_marker_line() {
        let raw = "Alex is grieving.\nTherefore: Sam should frown.\nA listener would normally be sad.\nTherefore: Sam should look sympathetic.";
        assert_eq!(
            parse_completion(raw, COT, Some("Therefore:")).unwrap(),
            "Sam should look sympathetic."
        );
    }

    #[test]
    fn chain_of_thought_missing_marker() {
        let err = parse_completion("Sam should smile.", COT, Some("Therefore:")).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }

    #[test]
    fn marker_with_nothing_after_is_a_parse_error() {
        assert!(parse_completion("step\nTherefore:   ", COT, Some("Therefore:")).is_err());
    }

    #[test]
    fn empty_completion() {
        assert!(parse_completion("   ", TemplateStyle::ZeroShot, None).is_err());
    }
}
