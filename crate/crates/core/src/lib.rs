//! Reference-free hallucination judging for LLM-generated code review comments.
//!
//! A review comment is judged against the unified diff it was written for:
//! prompt strategies ask an LLM to grade context alignment on a 0-4 scale,
//! the score is binarized into a hallucination verdict (optionally as a
//! multi-strategy ensemble), and an evaluation harness scores judge quality
//! and cost against labeled or preference-signal corpora.
//!
//! Module map:
//! - [`diff`] / [`comment`]: the judged context (parsed unified diff) and text.
//! - [`strategies`]: system/user prompt assembly for the four strategies.
//! - [`provider`]: LLM gateway with retries, robust JSON extraction, token
//!   accounting, and a deterministic mock for offline runs.
//! - [`judgment`]: the 0-4 rubric, binarization, and the ensemble rule.
//! - [`judge`]: the prompt -> complete -> extract -> verdict pipeline.
//! - [`cost`]: exact-decimal per-inference cost model and aggregation.
//! - [`eval`]: dataset ingestion, precision/recall/F1, consistency/coverage,
//!   Cohen's kappa, and the evaluation runner.
//! - [`gate`]: Block/Annotate/DryRun gating semantics for deployment.

pub mod comment;
pub mod cost;
pub mod diff;
pub mod eval;
pub mod gate;
pub mod judge;
pub mod judgment;
pub mod provider;
pub mod strategies;

pub use comment::ReviewComment;
pub use diff::{parse_unified_diff, ChangeType, CodeDiff, DiffError, DiffStats, LanguageTag};
pub use judge::{Judge, JudgeError, JudgeVerdict, Judgment};
pub use judgment::{binarize, ensemble, AlignmentScore, Assessment, EnsembleVerdict, Verdict};
pub use provider::{MockProvider, ModelSpec, RetryPolicy, Usage, UsageSource};
pub use strategies::StrategyKind;
