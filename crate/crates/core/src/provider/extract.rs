//! Robust extraction of the judge's JSON verdict from arbitrary model
//! output, plus the fallback token estimator.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::judgment::AlignmentScore;
use crate::strategies::ResponseSchema;

/// Fallback token estimate when a provider does not report usage:
/// `ceil(bytes / 4)`. Deterministic and monotone in input length; results
/// carry the `Estimated` provenance tag so they are never mistaken for
/// tokenizer-true counts.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.len() as u64).div_ceil(4)
}

/// The fields recovered from a judge reply.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extraction {
    pub answer: AlignmentScore,
    pub explanation: String,
    /// Keys beyond the required ones, values flattened to strings.
    pub extras: BTreeMap<String, String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExtractError {
    #[error("no JSON object found in response")]
    NoJsonFound,
    #[error("response JSON is missing required key {0:?}")]
    MissingRequiredKey(String),
    #[error("answer is not an integer in 0..=4: {0}")]
    AnswerOutOfRange(String),
}

/// Locate the first syntactically complete JSON object in `text` (prose
/// and code fences around it are ignored), validate the schema's required
/// keys, and coerce the answer to an integer score.
///
/// Total over arbitrary input: always a value or a classified error,
/// never a panic.
pub fn extract_assessment(
    text: &str,
    schema: &ResponseSchema,
) -> Result<Extraction, ExtractError> {
    let object = first_json_object(text).ok_or(ExtractError::NoJsonFound)?;

    let mut consumed: Vec<String> = Vec::new();
    for &key in schema.required_keys {
        let matched = find_key(&object, key)
            .ok_or_else(|| ExtractError::MissingRequiredKey(key.to_string()))?;
        consumed.push(matched.to_string());
    }

    let answer_key = find_key(&object, "answer")
        .ok_or_else(|| ExtractError::MissingRequiredKey("answer".to_string()))?;
    let answer = coerce_score(&object[answer_key])?;

    let explanation_key = find_key(&object, "explanation")
        .ok_or_else(|| ExtractError::MissingRequiredKey("explanation".to_string()))?;
    let explanation = object[explanation_key]
        .as_str()
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .ok_or_else(|| ExtractError::MissingRequiredKey("explanation".to_string()))?
        .to_string();

    let extras = object
        .iter()
        .filter(|(key, _)| !consumed.iter().any(|c| c == *key))
        .map(|(key, value)| {
            let rendered = match value {
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            (key.clone(), rendered)
        })
        .collect();

    Ok(Extraction {
        answer,
        explanation,
        extras,
    })
}

/// Exact key match, else a unique case-insensitive match (judges sometimes
/// capitalize field names in reasoning logs).
fn find_key<'a>(
    object: &'a serde_json::Map<String, serde_json::Value>,
    key: &str,
) -> Option<&'a str> {
    if object.contains_key(key) {
        return Some(object.keys().find(|k| *k == key).unwrap().as_str());
    }
    let mut matches = object.keys().filter(|k| k.eq_ignore_ascii_case(key));
    let first = matches.next()?;
    if matches.next().is_some() {
        return None;
    }
    Some(first.as_str())
}

fn coerce_score(value: &serde_json::Value) -> Result<AlignmentScore, ExtractError> {
    let out_of_range = || ExtractError::AnswerOutOfRange(value.to_string());
    let integer = match value {
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i
            } else if let Some(f) = n.as_f64() {
                if f.fract() == 0.0 && f.abs() < i64::MAX as f64 {
                    f as i64
                } else {
                    return Err(out_of_range());
                }
            } else {
                return Err(out_of_range());
            }
        }
        serde_json::Value::String(s) => s.trim().parse::<i64>().map_err(|_| out_of_range())?,
        _ => return Err(out_of_range()),
    };
    AlignmentScore::new(integer).map_err(|_| out_of_range())
}

/// Scan for the first `{` that opens a balanced, parseable JSON object.
fn first_json_object(text: &str) -> Option<serde_json::Map<String, serde_json::Value>> {
    let bytes = text.as_bytes();
    for start in memchr_iter(bytes, b'{') {
        if let Some(end) = balanced_object_end(bytes, start) {
            if let Ok(serde_json::Value::Object(map)) =
                serde_json::from_str(&text[start..=end])
            {
                return Some(map);
            }
        }
    }
    None
}

fn memchr_iter(bytes: &[u8], needle: u8) -> impl Iterator<Item = usize> + '_ {
    bytes
        .iter()
        .enumerate()
        .filter_map(move |(i, &b)| (b == needle).then_some(i))
}

/// Index of the `}` closing the object opened at `start`, honoring string
/// literals and escapes.
fn balanced_object_end(bytes: &[u8], start: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (offset, &b) in bytes[start..].iter().enumerate() {
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(start + offset);
                }
            }
            _ => {}
        }
    }
    None
}
