//! Line-delimited JSON dataset ingestion: one case per line, fail-fast
//! with the offending line number on any malformed record.

use serde::Deserialize;

use super::EvalError;
use crate::comment::ReviewComment;
use crate::diff::{parse_unified_diff, ChangeType, CodeDiff, LanguageTag};

/// A ground-truth labeled case.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedCase {
    pub case_id: String,
    pub diff: CodeDiff,
    pub comment: ReviewComment,
    pub label_hallucinated: bool,
    pub language: LanguageTag,
    pub change_type: ChangeType,
}

/// A developer-preference signal case.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceCase {
    pub case_id: String,
    pub diff: CodeDiff,
    pub comment: ReviewComment,
    pub reaction: Reaction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reaction {
    ThumbsUp,
    ThumbsDown,
}

/// A homogeneous dataset: either all labeled or all preference cases.
#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    Annotated(Vec<AnnotatedCase>),
    Preference(Vec<PreferenceCase>),
}

impl Dataset {
    pub fn len(&self) -> usize {
        match self {
            Dataset::Annotated(cases) => cases.len(),
            Dataset::Preference(cases) => cases.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Dataset::Annotated(_) => "annotated",
            Dataset::Preference(_) => "preference",
        }
    }
}

#[derive(Debug, Deserialize)]
struct RawCase {
    case_id: String,
    diff: String,
    comment: String,
    #[serde(default)]
    label: Option<String>,
    #[serde(default)]
    reaction: Option<String>,
    #[serde(default)]
    language: Option<String>,
    #[serde(default)]
    change_type: Option<String>,
}

fn line_err(line: usize, message: impl Into<String>) -> EvalError {
    EvalError::Dataset {
        line,
        message: message.into(),
    }
}

/// Parse a JSONL dataset. The first case decides the schema (`label` vs
/// `reaction`); every later line must match it. `language`/`change_type`
/// override the values derived from the diff when present.
pub fn load_dataset_str(text: &str) -> Result<Dataset, EvalError> {
    let mut annotated: Vec<AnnotatedCase> = Vec::new();
    let mut preference: Vec<PreferenceCase> = Vec::new();
    let mut seen_ids: std::collections::BTreeSet<String> = Default::default();

    for (index, line) in text.lines().enumerate() {
        let line_no = index + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawCase = serde_json::from_str(line)
            .map_err(|e| line_err(line_no, format!("invalid JSON: {e}")))?;
        if raw.case_id.trim().is_empty() {
            return Err(line_err(line_no, "case_id is empty"));
        }
        if !seen_ids.insert(raw.case_id.clone()) {
            return Err(line_err(line_no, format!("duplicate case_id {:?}", raw.case_id)));
        }
        let diff = parse_unified_diff(&raw.diff)
            .map_err(|e| line_err(line_no, format!("diff: {e}")))?;
        let comment = ReviewComment::new(raw.case_id.clone(), raw.comment)
            .map_err(|e| line_err(line_no, e.to_string()))?;

        match (raw.label, raw.reaction) {
            (Some(label), None) => {
                if !preference.is_empty() {
                    return Err(line_err(
                        line_no,
                        "labeled case in a preference dataset; datasets must be homogeneous",
                    ));
                }
                let label_hallucinated = match label.as_str() {
                    "hallucinated" => true,
                    "ok" => false,
                    other => {
                        return Err(line_err(
                            line_no,
                            format!("label must be \"hallucinated\" or \"ok\", got {other:?}"),
                        ))
                    }
                };
                let language = match raw.language {
                    Some(name) => name.parse().expect("language parsing is infallible"),
                    None => diff.dominant_language(),
                };
                let change_type = match raw.change_type {
                    Some(name) => name
                        .parse()
                        .map_err(|e: crate::diff::DiffError| line_err(line_no, e.to_string()))?,
                    None => diff.change_type(),
                };
                annotated.push(AnnotatedCase {
                    case_id: raw.case_id,
                    diff,
                    comment,
                    label_hallucinated,
                    language,
                    change_type,
                });
            }
            (None, Some(reaction)) => {
                if !annotated.is_empty() {
                    return Err(line_err(
                        line_no,
                        "preference case in a labeled dataset; datasets must be homogeneous",
                    ));
                }
                let reaction = match reaction.as_str() {
                    "up" => Reaction::ThumbsUp,
                    "down" => Reaction::ThumbsDown,
                    other => {
                        return Err(line_err(
                            line_no,
                            format!("reaction must be \"up\" or \"down\", got {other:?}"),
                        ))
                    }
                };
                preference.push(PreferenceCase {
                    case_id: raw.case_id,
                    diff,
                    comment,
                    reaction,
                });
            }
            (Some(_), Some(_)) => {
                return Err(line_err(line_no, "case has both \"label\" and \"reaction\""))
            }
            (None, None) => {
                return Err(line_err(line_no, "case has neither \"label\" nor \"reaction\""))
            }
        }
    }

    if !annotated.is_empty() {
        Ok(Dataset::Annotated(annotated))
    } else if !preference.is_empty() {
        Ok(Dataset::Preference(preference))
    } else {
        Err(EvalError::EmptyDataset)
    }
}

pub fn load_dataset(path: &std::path::Path) -> Result<Dataset, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|e| EvalError::Dataset {
        line: 0,
        message: format!("{}: {e}", path.display()),
    })?;
    load_dataset_str(&text)
}
