//! Unified-diff model: the factual context a review comment is judged against.
//!
//! The parser accepts standard unified diffs as produced by `git diff` or
//! `diff -u`, including `diff --git`/`index`/mode preamble lines (ignored
//! structurally but preserved in [`CodeDiff::raw_text`]). Parsing is strict
//! about hunk arithmetic: a hunk whose body does not account for the counts
//! declared in its `@@` header is rejected, because a miscounted diff is an
//! unusable judging context.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Whether a diff line is shared context, added, or removed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineKind {
    Context,
    Added,
    Removed,
}

impl LineKind {
    /// The leading marker character this kind maps to.
    pub fn marker(self) -> char {
        match self {
            LineKind::Context => ' ',
            LineKind::Added => '+',
            LineKind::Removed => '-',
        }
    }
}

/// One line of a hunk body, without its leading marker character.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffLine {
    pub kind: LineKind,
    pub content: String,
    /// Set when the line was followed by a `\ No newline at end of file`
    /// marker, so rendering can reproduce it.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub no_newline: bool,
}

impl DiffLine {
    pub fn new(kind: LineKind, content: impl Into<String>) -> Self {
        DiffLine {
            kind,
            content: content.into(),
            no_newline: false,
        }
    }
}

/// A contiguous change region within one file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hunk {
    pub old_start: u64,
    pub old_count: u64,
    pub new_start: u64,
    pub new_count: u64,
    /// Trailing section heading from the `@@` line, empty when absent.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub section: String,
    pub lines: Vec<DiffLine>,
}

impl Hunk {
    /// Lines counted against the old file (context + removals).
    pub fn old_lines(&self) -> usize {
        self.lines.iter().filter(|l| l.kind != LineKind::Added).count()
    }

    /// Lines counted against the new file (context + additions).
    pub fn new_lines(&self) -> usize {
        self.lines.iter().filter(|l| l.kind != LineKind::Removed).count()
    }
}

/// The change set for a single file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDiff {
    /// Repo-relative path before the change; `None` for a new file.
    pub old_path: Option<String>,
    /// Repo-relative path after the change; `None` for a deleted file.
    pub new_path: Option<String>,
    pub hunks: Vec<Hunk>,
    pub language: LanguageTag,
    pub change_type: ChangeType,
}

impl FileDiff {
    /// The path the change is attributed to: the post-change path when it
    /// exists, otherwise the pre-change path.
    pub fn primary_path(&self) -> &str {
        self.new_path
            .as_deref()
            .or(self.old_path.as_deref())
            .unwrap_or("")
    }
}

/// Aggregate size of a parsed diff.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DiffStats {
    /// Total `+` and `-` lines across all hunks.
    pub changed_lines: u64,
    pub files_touched: u64,
    pub directories_touched: u64,
}

/// A parsed unified diff plus the exact bytes it came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeDiff {
    /// The input text, byte-exact. Prompt builders embed this, never a
    /// re-rendering, so the judge sees what the reviewer saw.
    pub raw_text: String,
    pub files: Vec<FileDiff>,
    pub stats: DiffStats,
}

impl CodeDiff {
    /// Add only when every file is Add; Modify otherwise.
    pub fn change_type(&self) -> ChangeType {
        if self.files.iter().all(|f| f.change_type == ChangeType::Add) {
            ChangeType::Add
        } else {
            ChangeType::Modify
        }
    }

    /// Most frequent file language, ties broken by first occurrence.
    pub fn dominant_language(&self) -> LanguageTag {
        let mut best: Option<(&LanguageTag, usize)> = None;
        for file in &self.files {
            let count = self
                .files
                .iter()
                .filter(|f| f.language == file.language)
                .count();
            match best {
                Some((_, n)) if n >= count => {}
                _ => best = Some((&file.language, count)),
            }
        }
        best.map(|(l, _)| l.clone()).unwrap_or(LanguageTag::Other(String::new()))
    }

    /// Render the parsed structure back to unified-diff text. Hunk bodies are
    /// reproduced line-for-line; file headers are normalized to the
    /// `--- a/path` / `+++ b/path` form and preamble lines are not emitted.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for file in &self.files {
            match &file.old_path {
                Some(p) => {
                    out.push_str("--- a/");
                    out.push_str(p);
                }
                None => out.push_str("--- /dev/null"),
            }
            out.push('\n');
            match &file.new_path {
                Some(p) => {
                    out.push_str("+++ b/");
                    out.push_str(p);
                }
                None => out.push_str("+++ /dev/null"),
            }
            out.push('\n');
            for hunk in &file.hunks {
                out.push_str(&format!(
                    "@@ -{},{} +{},{} @@",
                    hunk.old_start, hunk.old_count, hunk.new_start, hunk.new_count
                ));
                if !hunk.section.is_empty() {
                    out.push(' ');
                    out.push_str(&hunk.section);
                }
                out.push('\n');
                for line in &hunk.lines {
                    out.push(line.kind.marker());
                    out.push_str(&line.content);
                    out.push('\n');
                    if line.no_newline {
                        out.push_str("\\ No newline at end of file\n");
                    }
                }
            }
        }
        out
    }
}

/// Source language of a file, determined solely by its extension.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LanguageTag {
    Java,
    Python,
    JavaScript,
    TypeScript,
    Kotlin,
    Other(String),
}

impl LanguageTag {
    pub fn from_path(path: &str) -> Self {
        let ext = path.rsplit('/').next().unwrap_or(path);
        let ext = match ext.rsplit_once('.') {
            Some((stem, ext)) if !stem.is_empty() => ext.to_ascii_lowercase(),
            _ => String::new(),
        };
        match ext.as_str() {
            "java" => LanguageTag::Java,
            "py" => LanguageTag::Python,
            "js" | "jsx" => LanguageTag::JavaScript,
            "ts" | "tsx" => LanguageTag::TypeScript,
            "kt" | "kts" => LanguageTag::Kotlin,
            _ => LanguageTag::Other(ext),
        }
    }
}

impl fmt::Display for LanguageTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LanguageTag::Java => write!(f, "Java"),
            LanguageTag::Python => write!(f, "Python"),
            LanguageTag::JavaScript => write!(f, "JavaScript"),
            LanguageTag::TypeScript => write!(f, "TypeScript"),
            LanguageTag::Kotlin => write!(f, "Kotlin"),
            LanguageTag::Other(ext) if ext.is_empty() => write!(f, "Other"),
            LanguageTag::Other(ext) => write!(f, "Other({ext})"),
        }
    }
}

impl std::str::FromStr for LanguageTag {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "java" => LanguageTag::Java,
            "python" => LanguageTag::Python,
            "javascript" => LanguageTag::JavaScript,
            "typescript" => LanguageTag::TypeScript,
            "kotlin" => LanguageTag::Kotlin,
            other => LanguageTag::Other(other.to_string()),
        })
    }
}

impl Serialize for LanguageTag {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LanguageTag {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Ok(s.parse().unwrap())
    }
}

/// Whether a change purely adds lines or also touches existing ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ChangeType {
    Add,
    Modify,
}

impl fmt::Display for ChangeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChangeType::Add => write!(f, "Add"),
            ChangeType::Modify => write!(f, "Modify"),
        }
    }
}

impl std::str::FromStr for ChangeType {
    type Err = DiffError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "add" => Ok(ChangeType::Add),
            "modify" => Ok(ChangeType::Modify),
            other => Err(DiffError::MalformedDiff {
                line: 0,
                reason: format!("unknown change type {other:?} (expected Add or Modify)"),
            }),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DiffError {
    /// The input cannot be parsed into a structurally valid diff. Judging
    /// must not proceed on such input.
    #[error("malformed diff at line {line}: {reason}")]
    MalformedDiff { line: usize, reason: String },
}

fn malformed(line: usize, reason: impl Into<String>) -> DiffError {
    DiffError::MalformedDiff {
        line,
        reason: reason.into(),
    }
}

/// Add iff no line in any hunk was removed.
pub fn classify_change_type(file: &FileDiff) -> ChangeType {
    let has_removal = file
        .hunks
        .iter()
        .flat_map(|h| h.lines.iter())
        .any(|l| l.kind == LineKind::Removed);
    if has_removal {
        ChangeType::Modify
    } else {
        ChangeType::Add
    }
}

/// Count changed lines, touched files, and distinct parent directories.
pub fn diff_stats(files: &[FileDiff]) -> DiffStats {
    let changed_lines = files
        .iter()
        .flat_map(|f| f.hunks.iter())
        .flat_map(|h| h.lines.iter())
        .filter(|l| l.kind != LineKind::Context)
        .count() as u64;
    let mut dirs: BTreeSet<&str> = BTreeSet::new();
    for file in files {
        let path = file.primary_path();
        let dir = path.rsplit_once('/').map(|(d, _)| d).unwrap_or("");
        dirs.insert(dir);
    }
    DiffStats {
        changed_lines,
        files_touched: files.len() as u64,
        directories_touched: if files.is_empty() { 0 } else { dirs.len() as u64 },
    }
}

/// Parse unified-diff text into a [`CodeDiff`].
///
/// Total over its domain: any input yields either a valid `CodeDiff` (all
/// type invariants hold) or a [`DiffError::MalformedDiff`] — never a
/// structurally inconsistent value.
pub fn parse_unified_diff(text: &str) -> Result<CodeDiff, DiffError> {
    if text.is_empty() {
        return Err(malformed(0, "empty input"));
    }

    let mut lines: Vec<&str> = text.split('\n').collect();
    // A trailing newline yields one empty trailing segment, not a line.
    if lines.last() == Some(&"") {
        lines.pop();
    }

    let mut files: Vec<FileDiff> = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let line = lines[i];
        if let Some(old_header) = header_path(line, "--- ") {
            let Some(new_header) = lines.get(i + 1).and_then(|l| header_path(l, "+++ ")) else {
                // A lone `--- ` line with no `+++ ` partner is preamble
                // (e.g. a horizontal rule in a commit message).
                i += 1;
                continue;
            };
            let old_path = strip_prefix_path(old_header, "a/");
            let new_path = strip_prefix_path(new_header, "b/");
            if old_path.is_none() && new_path.is_none() {
                return Err(malformed(i + 1, "both sides of file header are /dev/null"));
            }
            i += 2;
            let mut hunks = Vec::new();
            while i < lines.len() && lines[i].starts_with("@@") {
                let (hunk, consumed) = parse_hunk(&lines, i)?;
                i += consumed;
                hunks.push(hunk);
            }
            let language = LanguageTag::from_path(
                new_path.as_deref().or(old_path.as_deref()).unwrap_or(""),
            );
            let mut file = FileDiff {
                old_path,
                new_path,
                hunks,
                language,
                change_type: ChangeType::Add,
            };
            file.change_type = classify_change_type(&file);
            files.push(file);
        } else if line.starts_with("@@") {
            return Err(malformed(i + 1, "hunk header before any file header"));
        } else if line.starts_with('+') {
            return Err(malformed(i + 1, "addition line outside any hunk"));
        } else if line.starts_with('-') && !line.starts_with("---") {
            return Err(malformed(i + 1, "removal line outside any hunk"));
        } else if line.starts_with('\\') {
            return Err(malformed(i + 1, "no-newline marker with no preceding line"));
        } else {
            // Preamble: `diff --git`, `index`, mode lines, commit text.
            i += 1;
        }
    }

    if files.is_empty() {
        return Err(malformed(0, "no file headers found"));
    }
    let stats = diff_stats(&files);
    Ok(CodeDiff {
        raw_text: text.to_string(),
        files,
        stats,
    })
}

/// Parse one hunk starting at `lines[start]`; returns it and the number of
/// lines consumed (header + body + trailing no-newline marker).
fn parse_hunk(lines: &[&str], start: usize) -> Result<(Hunk, usize), DiffError> {
    let header = lines[start];
    let (old_start, old_count, new_start, new_count, section) =
        parse_hunk_header(header).ok_or_else(|| {
            malformed(start + 1, format!("invalid hunk header {header:?}"))
        })?;

    let mut body = Vec::new();
    let mut remaining_old = old_count;
    let mut remaining_new = new_count;
    let mut i = start + 1;
    while remaining_old > 0 || remaining_new > 0 {
        let Some(&line) = lines.get(i) else {
            return Err(malformed(
                i,
                format!(
                    "hunk body ended early: {remaining_old} old and {remaining_new} new line(s) still expected"
                ),
            ));
        };
        let mut chars = line.chars();
        match chars.next() {
            Some(' ') => {
                if remaining_old == 0 || remaining_new == 0 {
                    return Err(malformed(i + 1, "context line exceeds hunk header counts"));
                }
                remaining_old -= 1;
                remaining_new -= 1;
                body.push(DiffLine::new(LineKind::Context, chars.as_str()));
            }
            Some('+') => {
                if remaining_new == 0 {
                    return Err(malformed(i + 1, "addition line exceeds hunk header counts"));
                }
                remaining_new -= 1;
                body.push(DiffLine::new(LineKind::Added, chars.as_str()));
            }
            Some('-') => {
                if remaining_old == 0 {
                    return Err(malformed(i + 1, "removal line exceeds hunk header counts"));
                }
                remaining_old -= 1;
                body.push(DiffLine::new(LineKind::Removed, chars.as_str()));
            }
            Some('\\') => {
                let Some(last) = body.last_mut() else {
                    return Err(malformed(i + 1, "no-newline marker before any hunk line"));
                };
                last.no_newline = true;
            }
            _ => {
                return Err(malformed(
                    i + 1,
                    format!("unknown line marker in hunk body: {line:?}"),
                ));
            }
        }
        i += 1;
    }
    // A no-newline marker may follow the final body line.
    if let Some(&line) = lines.get(i) {
        if line.starts_with('\\') {
            if let Some(last) = body.last_mut() {
                last.no_newline = true;
                i += 1;
            }
        }
    }

    Ok((
        Hunk {
            old_start,
            old_count,
            new_start,
            new_count,
            section,
            lines: body,
        },
        i - start,
    ))
}

/// `@@ -old_start[,old_count] +new_start[,new_count] @@[ section]`
fn parse_hunk_header(line: &str) -> Option<(u64, u64, u64, u64, String)> {
    let rest = line.strip_prefix("@@ -")?;
    let (old_part, rest) = rest.split_once(" +")?;
    let (new_part, rest) = rest.split_once(" @@")?;
    let (old_start, old_count) = parse_range(old_part)?;
    let (new_start, new_count) = parse_range(new_part)?;
    let section = rest.strip_prefix(' ').unwrap_or(rest).to_string();
    Some((old_start, old_count, new_start, new_count, section))
}

fn parse_range(part: &str) -> Option<(u64, u64)> {
    match part.split_once(',') {
        Some((start, count)) => Some((start.parse().ok()?, count.parse().ok()?)),
        None => Some((part.parse().ok()?, 1)),
    }
}

/// Extract the path from a `--- ` / `+++ ` header line; strips a trailing
/// tab-separated timestamp if present.
fn header_path<'a>(line: &'a str, prefix: &str) -> Option<&'a str> {
    let rest = line.strip_prefix(prefix)?;
    let rest = rest.split('\t').next().unwrap_or(rest).trim_end();
    if rest.is_empty() {
        None
    } else {
        Some(rest)
    }
}

fn strip_prefix_path(path: &str, prefix: &str) -> Option<String> {
    if path == "/dev/null" {
        return None;
    }
    let path = path.strip_prefix(prefix).unwrap_or(path);
    Some(path.to_string())
}
