//! The 0-4 context-alignment rubric, the binarized hallucination decision,
//! and the multi-strategy majority ensemble.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::provider::Usage;
use crate::strategies::StrategyKind;

/// Context-alignment level: 0 (fully aligned) through 4 (completely
/// misaligned).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct AlignmentScore(u8);

impl AlignmentScore {
    pub const MIN: AlignmentScore = AlignmentScore(0);
    pub const MAX: AlignmentScore = AlignmentScore(4);

    pub fn new(value: i64) -> Result<Self, JudgmentError> {
        if (0..=4).contains(&value) {
            Ok(AlignmentScore(value as u8))
        } else {
            Err(JudgmentError::ScoreOutOfRange(value))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }
}

impl fmt::Display for AlignmentScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl TryFrom<u8> for AlignmentScore {
    type Error = JudgmentError;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        AlignmentScore::new(value as i64)
    }
}

impl From<AlignmentScore> for u8 {
    fn from(score: AlignmentScore) -> u8 {
        score.0
    }
}

/// One strategy's judgment of a (diff, comment) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assessment {
    pub score: AlignmentScore,
    pub explanation: String,
    pub strategy: StrategyKind,
    /// Model identifier the judgment came from.
    pub model: String,
    pub usage: Usage,
    /// The provider's full response text; the JSON object the score was
    /// extracted from is a substring of this.
    pub raw_response: String,
    /// Keys beyond `answer`/`explanation` (tree-of-thoughts branch logs,
    /// confidence, ...) with values flattened to strings.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extras: BTreeMap<String, String>,
}

/// A single claim the judge mapped to diff evidence. Only populated when
/// the tree-of-thoughts response supplies structured claims; never
/// synthesized here.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claim {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mapped_evidence: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supported: Option<bool>,
}

impl Claim {
    /// Parse claims out of an assessment's extras, looking for a `claims`
    /// key holding an array of `{text, evidence?, supported?}` objects.
    /// Returns empty when the judge did not emit any.
    pub fn from_assessment(assessment: &Assessment) -> Vec<Claim> {
        let Some(raw) = assessment.extras.get("claims") else {
            return Vec::new();
        };
        let Ok(serde_json::Value::Array(items)) = serde_json::from_str(raw) else {
            return Vec::new();
        };
        items
            .into_iter()
            .filter_map(|item| {
                let obj = item.as_object()?;
                let text = obj.get("text").or_else(|| obj.get("claim"))?.as_str()?.to_string();
                Some(Claim {
                    text,
                    mapped_evidence: obj
                        .get("evidence")
                        .or_else(|| obj.get("mapped_evidence"))
                        .and_then(|v| v.as_str())
                        .map(str::to_string),
                    supported: obj.get("supported").and_then(|v| v.as_bool()),
                })
            })
            .collect()
    }
}

/// A binarized hallucination decision for one assessment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub hallucinated: bool,
    pub score: AlignmentScore,
    /// Minimum score treated as hallucinated when this verdict was made.
    pub threshold: u8,
}

/// Majority decision over per-strategy verdicts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleVerdict {
    pub members: Vec<Verdict>,
    /// Fraction of members judged hallucinated.
    pub mean_indicator: f64,
    pub hallucinated: bool,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum JudgmentError {
    #[error("alignment score {0} outside 0..=4")]
    ScoreOutOfRange(i64),
    #[error("threshold {0} outside 1..=4")]
    InvalidThreshold(u8),
    #[error("ensemble needs at least two assessments, got {0}")]
    TooFewMembers(usize),
}

/// Declare a comment hallucinated when its score reaches `threshold`.
///
/// The default threshold is 1: any score above zero means at least one
/// claim lacked support.
pub fn binarize(score: AlignmentScore, threshold: u8) -> Result<Verdict, JudgmentError> {
    if !(1..=4).contains(&threshold) {
        return Err(JudgmentError::InvalidThreshold(threshold));
    }
    Ok(Verdict {
        hallucinated: score.value() >= threshold,
        score,
        threshold,
    })
}

/// Majority ensemble over two or more assessments of the same pair: the
/// comment is hallucinated when at least half the members say so (ties go
/// to hallucinated, biasing the safeguard toward blocking).
pub fn ensemble(
    assessments: &[Assessment],
    threshold: u8,
) -> Result<EnsembleVerdict, JudgmentError> {
    if assessments.len() < 2 {
        return Err(JudgmentError::TooFewMembers(assessments.len()));
    }
    let members = assessments
        .iter()
        .map(|a| binarize(a.score, threshold))
        .collect::<Result<Vec<_>, _>>()?;
    let positive = members.iter().filter(|v| v.hallucinated).count();
    Ok(EnsembleVerdict {
        hallucinated: positive * 2 >= members.len(),
        mean_indicator: positive as f64 / members.len() as f64,
        members,
    })
}
