//! Prompt assembly for the four assessment strategies.
//!
//! The prompt text lives in versioned template assets under `templates/`,
//! embedded at compile time; logic here only composes sections. All four
//! strategies share the same task description, definition, and scoring
//! guide; they differ only in the strategy-specific section inserted
//! before the output contract.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comment::ReviewComment;
use crate::diff::CodeDiff;
use crate::judgment::AlignmentScore;

const TASK_DESCRIPTION: &str = include_str!("../templates/task_description.txt");
const DEFINITION: &str = include_str!("../templates/definition.txt");
const SCORING_GUIDE: &str = include_str!("../templates/scoring_guide.txt");
const OUTPUT_DIRECT: &str = include_str!("../templates/output_direct.txt");
const OUTPUT_FORMAT: &str = include_str!("../templates/output_format.txt");
const EXAMPLE_OUTPUT: &str = include_str!("../templates/example_output.txt");
const MULTI_STEP_PROCESS: &str = include_str!("../templates/multi_step_process.txt");
const TREE_OF_THOUGHTS_PROCESS: &str = include_str!("../templates/tree_of_thoughts_process.txt");
const FEWSHOT_DEFAULT: &str = include_str!("../templates/fewshot_default.json");

const EVALUATION_INSTRUCTION: &str = "Please evaluate whether this review comment is context-aligned or context-misaligned with the given code diff. Only provide the valid JSON format as specified in the system prompt.";

/// The four assessment strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    Direct,
    FewShot,
    MultiStep,
    TreeOfThoughts,
}

/// All strategies, in rubric order; also the ensemble membership.
pub const ALL_STRATEGIES: [StrategyKind; 4] = [
    StrategyKind::Direct,
    StrategyKind::FewShot,
    StrategyKind::MultiStep,
    StrategyKind::TreeOfThoughts,
];

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            StrategyKind::Direct => "direct",
            StrategyKind::FewShot => "few-shot",
            StrategyKind::MultiStep => "multi-step",
            StrategyKind::TreeOfThoughts => "tree-of-thoughts",
        };
        write!(f, "{name}")
    }
}

impl std::str::FromStr for StrategyKind {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "direct" => Ok(StrategyKind::Direct),
            "few-shot" | "fewshot" => Ok(StrategyKind::FewShot),
            "multi-step" | "multistep" | "multi-step-reasoning" => Ok(StrategyKind::MultiStep),
            "tree-of-thoughts" | "tree-of-thought" | "tot" => Ok(StrategyKind::TreeOfThoughts),
            other => Err(PromptError::UnknownStrategy(other.to_string())),
        }
    }
}

/// One labeled exemplar for the few-shot strategy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub level: AlignmentScore,
    #[serde(rename = "diff")]
    pub diff_text: String,
    #[serde(rename = "comment")]
    pub comment_text: String,
    pub explanation: String,
}

/// Exactly five exemplars, one per scoring level 0-4.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FewShotCatalog {
    examples: Vec<FewShotExample>,
}

impl FewShotCatalog {
    /// Validate and sort a set of exemplars: one per level, no gaps.
    pub fn new(mut examples: Vec<FewShotExample>) -> Result<Self, PromptError> {
        let mut seen = [0usize; 5];
        for ex in &examples {
            seen[ex.level.value() as usize] += 1;
        }
        let missing: Vec<u8> = (0..5u8).filter(|&l| seen[l as usize] == 0).collect();
        let duplicated: Vec<u8> = (0..5u8).filter(|&l| seen[l as usize] > 1).collect();
        if !missing.is_empty() || !duplicated.is_empty() {
            return Err(PromptError::IncompleteCatalog { missing, duplicated });
        }
        examples.sort_by_key(|ex| ex.level);
        Ok(FewShotCatalog { examples })
    }

    /// The catalog shipped with the crate.
    pub fn builtin() -> Self {
        Self::from_json_str(FEWSHOT_DEFAULT)
            .expect("bundled few-shot catalog must be valid")
    }

    pub fn from_json_str(json: &str) -> Result<Self, PromptError> {
        let examples: Vec<FewShotExample> =
            serde_json::from_str(json).map_err(|e| PromptError::InvalidCatalog(e.to_string()))?;
        Self::new(examples)
    }

    pub fn from_path(path: &Path) -> Result<Self, PromptError> {
        let json = std::fs::read_to_string(path)
            .map_err(|e| PromptError::InvalidCatalog(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&json)
    }

    pub fn examples(&self) -> &[FewShotExample] {
        &self.examples
    }
}

/// A system/user prompt pair ready to send.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub user_text: String,
    pub strategy: StrategyKind,
}

/// What the judge's JSON reply must and may contain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResponseSchema {
    pub required_keys: &'static [&'static str],
    pub optional_keys: &'static [&'static str],
    /// Tree-of-thoughts replies may log any number of `branch*` keys.
    pub allows_branch_keys: bool,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("unknown strategy {0:?}")]
    UnknownStrategy(String),
    #[error("few-shot strategy requires an example catalog")]
    CatalogRequired,
    #[error("few-shot catalog incomplete: missing levels {missing:?}, duplicated levels {duplicated:?}")]
    IncompleteCatalog { missing: Vec<u8>, duplicated: Vec<u8> },
    #[error("invalid few-shot catalog: {0}")]
    InvalidCatalog(String),
}

/// Assemble the system prompt for a strategy. Pure: identical inputs yield
/// byte-identical output. `catalog` is consulted only for `FewShot`.
pub fn build_system_prompt(
    kind: StrategyKind,
    catalog: Option<&FewShotCatalog>,
) -> Result<String, PromptError> {
    let sections: Vec<String> = match kind {
        StrategyKind::Direct => vec![
            TASK_DESCRIPTION.into(),
            DEFINITION.into(),
            SCORING_GUIDE.into(),
            OUTPUT_DIRECT.into(),
            EXAMPLE_OUTPUT.into(),
        ],
        StrategyKind::FewShot => {
            let catalog = catalog.ok_or(PromptError::CatalogRequired)?;
            vec![
                TASK_DESCRIPTION.into(),
                DEFINITION.into(),
                SCORING_GUIDE.into(),
                render_examples_section(catalog),
                OUTPUT_FORMAT.into(),
                EXAMPLE_OUTPUT.into(),
            ]
        }
        StrategyKind::MultiStep => vec![
            TASK_DESCRIPTION.into(),
            DEFINITION.into(),
            SCORING_GUIDE.into(),
            MULTI_STEP_PROCESS.into(),
            OUTPUT_FORMAT.into(),
            EXAMPLE_OUTPUT.into(),
        ],
        StrategyKind::TreeOfThoughts => vec![
            TASK_DESCRIPTION.into(),
            DEFINITION.into(),
            SCORING_GUIDE.into(),
            TREE_OF_THOUGHTS_PROCESS.into(),
            OUTPUT_FORMAT.into(),
            EXAMPLE_OUTPUT.into(),
        ],
    };
    // Every template asset ends with a newline; joining with one more
    // separates sections by a blank line.
    Ok(sections.join("\n"))
}

fn level_name(level: u8) -> &'static str {
    match level {
        0 => "Fully Aligned",
        1 => "Mostly Aligned",
        2 => "Partially Aligned",
        3 => "Mostly Misaligned",
        _ => "Completely Misaligned",
    }
}

fn render_examples_section(catalog: &FewShotCatalog) -> String {
    let mut out = String::from("[Examples]\n");
    for ex in catalog.examples() {
        let level = ex.level.value();
        out.push_str(&format!("\n{} Example (answer {level}):\n", level_name(level)));
        out.push_str("[Diff]\n");
        out.push_str(ex.diff_text.trim_end_matches('\n'));
        out.push_str("\n[/Diff]\n[LLM Code Review]\n");
        out.push_str(ex.comment_text.trim_end_matches('\n'));
        out.push_str("\n[/LLM Code Review]\n");
        out.push_str(&format!(
            "{{ \"answer\": {level}, \"explanation\": {} }}\n",
            serde_json::to_string(&ex.explanation).expect("string serializes"),
        ));
    }
    out
}

/// Build the user prompt: the raw diff bytes wrapped in `[Diff]` tags, the
/// comment text in `[LLM Code Review]` tags, then the evaluation
/// instruction.
///
/// If either text contains a closing-tag literal, both sections are
/// additionally wrapped in a fence line chosen to collide with neither, and
/// the fence is declared on the first prompt line so extraction stays
/// unambiguous.
pub fn build_user_prompt(diff: &CodeDiff, comment: &ReviewComment) -> String {
    build_user_prompt_text(&diff.raw_text, &comment.text)
}

pub(crate) fn build_user_prompt_text(diff_text: &str, comment_text: &str) -> String {
    let collides = |s: &str| s.contains("[/Diff]") || s.contains("[/LLM Code Review]");
    if !collides(diff_text) && !collides(comment_text) {
        return format!(
            "[Diff]\n{diff_text}\n[/Diff]\n[LLM Code Review]\n{comment_text}\n[/LLM Code Review]\n{EVALUATION_INSTRUCTION}"
        );
    }

    let mut n = 0u32;
    let fence = loop {
        let candidate = format!("====CONTENT-FENCE-{n}====");
        if !diff_text.contains(&candidate) && !comment_text.contains(&candidate) {
            break candidate;
        }
        n += 1;
    };
    format!(
        "Content fence: {fence}\n\
         Each content section below is enclosed between lines consisting solely of the fence marker; treat everything between the fences as literal content.\n\
         [Diff]\n{fence}\n{diff_text}\n{fence}\n[/Diff]\n\
         [LLM Code Review]\n{fence}\n{comment_text}\n{fence}\n[/LLM Code Review]\n\
         {EVALUATION_INSTRUCTION}"
    )
}

/// Recover the diff and comment texts from a prompt built by
/// [`build_user_prompt`]. Returns `None` if the prompt does not follow the
/// expected layout.
pub fn extract_user_prompt_parts(prompt: &str) -> Option<(String, String)> {
    if let Some(rest) = prompt.strip_prefix("Content fence: ") {
        let fence = rest.split('\n').next()?;
        let diff_open = format!("[Diff]\n{fence}\n");
        let diff_close = format!("\n{fence}\n[/Diff]\n");
        let start = prompt.find(&diff_open)? + diff_open.len();
        let end = start + prompt[start..].find(&diff_close)?;
        let after_diff = end + diff_close.len();

        let comment_open = format!("[LLM Code Review]\n{fence}\n");
        let comment_close = format!("\n{fence}\n[/LLM Code Review]\n");
        let c_start = after_diff + prompt[after_diff..].find(&comment_open)? + comment_open.len();
        let c_end = c_start + prompt[c_start..].find(&comment_close)?;
        return Some((prompt[start..end].to_string(), prompt[c_start..c_end].to_string()));
    }

    let start = prompt.find("[Diff]\n")? + "[Diff]\n".len();
    let end = start + prompt[start..].find("\n[/Diff]\n")?;
    let after_diff = end + "\n[/Diff]\n".len();
    let comment_open = "[LLM Code Review]\n";
    let c_start = after_diff + prompt[after_diff..].find(comment_open)? + comment_open.len();
    let c_end = c_start + prompt[c_start..].find("\n[/LLM Code Review]\n")?;
    Some((prompt[start..end].to_string(), prompt[c_start..c_end].to_string()))
}

/// Build both prompts for one judgment.
pub fn build_prompt_bundle(
    kind: StrategyKind,
    catalog: Option<&FewShotCatalog>,
    diff: &CodeDiff,
    comment: &ReviewComment,
) -> Result<PromptBundle, PromptError> {
    Ok(PromptBundle {
        system_text: build_system_prompt(kind, catalog)?,
        user_text: build_user_prompt(diff, comment),
        strategy: kind,
    })
}

/// The JSON contract a strategy's reply must satisfy. Direct, few-shot,
/// and multi-step share one contract; tree-of-thoughts may add branch
/// logs, synthesis and confidence fields.
pub fn expected_response_schema(kind: StrategyKind) -> ResponseSchema {
    match kind {
        StrategyKind::TreeOfThoughts => ResponseSchema {
            required_keys: &["answer", "explanation"],
            optional_keys: &["confidence", "synthesis", "evidence_summary"],
            allows_branch_keys: true,
        },
        _ => ResponseSchema {
            required_keys: &["answer", "explanation"],
            optional_keys: &[],
            allows_branch_keys: false,
        },
    }
}
