//! Evaluation harness: run a judge over labeled or preference corpora and
//! compute effectiveness (precision/recall/F1), alignment (consistency/
//! coverage), per-stratum breakdowns, and cost.

mod dataset;
mod metrics;

pub use dataset::{load_dataset, load_dataset_str, AnnotatedCase, Dataset, PreferenceCase, Reaction};
pub use metrics::{
    cohen_kappa, compute_confusion, consistency, coverage, precision_recall_f1, AlignmentSets,
    ConfusionMatrix,
};

use std::collections::BTreeMap;
use std::fmt::Write as _;

use futures::StreamExt;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{aggregate_cost, CostSummary, UsdAmount};
use crate::judge::{Judge, JudgeError, JudgeVerdict, Judgment};
use crate::strategies::StrategyKind;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dataset line {line}: {message}")]
    Dataset { line: usize, message: String },
    #[error("dataset contains no cases")]
    EmptyDataset,
    #[error("verdicts and labels cover different cases: {0}")]
    KeyMismatch(String),
    #[error("rater label vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("metric input is empty")]
    EmptyInput,
    #[error(transparent)]
    Judge(#[from] JudgeError),
}

/// Echo of the evaluated configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub strategies: Vec<StrategyKind>,
    pub model: String,
    pub threshold: u8,
    pub dataset_kind: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseCounts {
    pub dataset: usize,
    pub evaluated: usize,
    pub unjudgeable: usize,
}

/// Precision/recall/F1 block for annotated datasets. `null` metric values
/// mean the denominator was zero; they are never coerced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectivenessReport {
    pub confusion: ConfusionMatrix,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    /// Keyed by `"<language>/<change type>"`; the strata partition the
    /// evaluated cases, so their matrices sum cell-wise to the global one.
    pub per_stratum: BTreeMap<String, StratumReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumReport {
    pub cases: usize,
    pub confusion: ConfusionMatrix,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

/// Consistency/coverage block for preference datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    /// |H'|: evaluated cases the judge called non-hallucinated.
    pub judged_clean: usize,
    /// |P|: evaluated cases with a thumbs-up reaction.
    pub preferred: usize,
    /// |H' ∩ P|.
    pub overlap: usize,
    pub consistency: Option<f64>,
    pub coverage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnjudgeableCase {
    pub case_id: String,
    pub reason: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

/// Per-case judgment trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseTrace {
    pub case_id: String,
    /// Score per strategy name.
    pub scores: BTreeMap<String, u8>,
    pub hallucinated: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_indicator: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label_hallucinated: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reaction: Option<String>,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub cost_usd: UsdAmount,
}

/// The full evaluation output. Serialization is deterministic: maps are
/// ordered, cases sort by case_id, and no timestamps are embedded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: ReportConfig,
    pub counts: CaseCounts,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub effectiveness: Option<EffectivenessReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alignment: Option<AlignmentReport>,
    pub cost: CostSummary,
    pub unjudgeable: Vec<UnjudgeableCase>,
    pub cases: Vec<CaseTrace>,
}

impl EvalReport {
    pub fn to_json_string(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("report serializes");
        out.push('\n');
        out
    }

    /// Compact fixed-width summary for standard output.
    pub fn summary_table(&self) -> String {
        let mut out = String::new();
        let fmt_opt = |v: Option<f64>| match v {
            Some(v) => format!("{v:.4}"),
            None => "undefined".to_string(),
        };
        let _ = writeln!(
            out,
            "cases: {} total, {} evaluated, {} unjudgeable",
            self.counts.dataset, self.counts.evaluated, self.counts.unjudgeable
        );
        if let Some(eff) = &self.effectiveness {
            let _ = writeln!(
                out,
                "confusion: tp={} fp={} fn={} tn={}",
                eff.confusion.true_positives,
                eff.confusion.false_positives,
                eff.confusion.false_negatives,
                eff.confusion.true_negatives
            );
            let _ = writeln!(
                out,
                "precision={} recall={} f1={}",
                fmt_opt(eff.precision),
                fmt_opt(eff.recall),
                fmt_opt(eff.f1)
            );
            for (stratum, block) in &eff.per_stratum {
                let _ = writeln!(
                    out,
                    "  [{stratum}] n={} precision={} recall={} f1={}",
                    block.cases,
                    fmt_opt(block.precision),
                    fmt_opt(block.recall),
                    fmt_opt(block.f1)
                );
            }
        }
        if let Some(align) = &self.alignment {
            let _ = writeln!(
                out,
                "judged clean: {} | preferred: {} | overlap: {}",
                align.judged_clean, align.preferred, align.overlap
            );
            let _ = writeln!(
                out,
                "consistency={} coverage={}",
                fmt_opt(align.consistency),
                fmt_opt(align.coverage)
            );
        }
        let mean = self
            .cost
            .mean_usd
            .map(|m| format!("${m}"))
            .unwrap_or_else(|| "undefined".to_string());
        let _ = writeln!(
            out,
            "cost: total ${} | mean {} | tokens in={} out={}",
            self.cost.total_usd, mean, self.cost.total_input_tokens, self.cost.total_output_tokens
        );
        out
    }
}

struct CaseOutcome {
    case_id: String,
    label_hallucinated: Option<bool>,
    reaction: Option<Reaction>,
    stratum: Option<String>,
    result: Result<Judgment, JudgeError>,
}

/// Judge every case in the dataset and reduce the outcomes into an
/// [`EvalReport`].
///
/// Cases are judged concurrently up to `concurrency` in-flight judgments
/// (additionally bounded by the gateway's own limit); results are merged
/// in case_id order so the report is identical at any concurrency level.
/// A provider failure or unparseable response degrades that case to
/// unjudgeable instead of aborting the run; unjudgeable cases are excluded
/// from every metric denominator and reported separately.
pub async fn run_evaluation(
    judge: &Judge,
    dataset: &Dataset,
    strategies: &[StrategyKind],
    threshold: u8,
    concurrency: usize,
) -> Result<EvalReport, EvalError> {
    if dataset.is_empty() {
        return Err(EvalError::EmptyDataset);
    }

    let jobs: Vec<(String, &crate::diff::CodeDiff, &crate::comment::ReviewComment, Option<bool>, Option<Reaction>, Option<String>)> =
        match dataset {
            Dataset::Annotated(cases) => cases
                .iter()
                .map(|c| {
                    (
                        c.case_id.clone(),
                        &c.diff,
                        &c.comment,
                        Some(c.label_hallucinated),
                        None,
                        Some(format!("{}/{}", c.language, c.change_type)),
                    )
                })
                .collect(),
            Dataset::Preference(cases) => cases
                .iter()
                .map(|c| (c.case_id.clone(), &c.diff, &c.comment, None, Some(c.reaction), None))
                .collect(),
        };

    let mut outcomes: Vec<CaseOutcome> = futures::stream::iter(jobs.into_iter().map(
        |(case_id, diff, comment, label, reaction, stratum)| async move {
            let result = judge.judge(diff, comment, strategies, threshold).await;
            CaseOutcome {
                case_id,
                label_hallucinated: label,
                reaction,
                stratum,
                result,
            }
        },
    ))
    .buffer_unordered(concurrency.max(1))
    .collect()
    .await;
    outcomes.sort_by(|a, b| a.case_id.cmp(&b.case_id));

    let mut cases: Vec<CaseTrace> = Vec::new();
    let mut unjudgeable: Vec<UnjudgeableCase> = Vec::new();
    let mut cost_records = Vec::new();
    let mut verdicts: BTreeMap<String, bool> = BTreeMap::new();
    let mut labels: BTreeMap<String, bool> = BTreeMap::new();
    let mut strata: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut sets = AlignmentSets::default();

    for outcome in &outcomes {
        match &outcome.result {
            Ok(judgment) => {
                let hallucinated = judgment.hallucinated();
                verdicts.insert(outcome.case_id.clone(), hallucinated);
                if let Some(label) = outcome.label_hallucinated {
                    labels.insert(outcome.case_id.clone(), label);
                }
                if let Some(stratum) = &outcome.stratum {
                    strata.entry(stratum.clone()).or_default().push(outcome.case_id.clone());
                }
                if let Some(reaction) = outcome.reaction {
                    if !hallucinated {
                        sets.non_hallucinated.insert(outcome.case_id.clone());
                    }
                    if reaction == Reaction::ThumbsUp {
                        sets.preferred.insert(outcome.case_id.clone());
                    }
                }
                cost_records.extend(judgment.cost_records.iter().cloned());
                let mean_indicator = match &judgment.verdict {
                    JudgeVerdict::Ensemble(e) => Some(e.mean_indicator),
                    JudgeVerdict::Single(_) => None,
                };
                cases.push(CaseTrace {
                    case_id: outcome.case_id.clone(),
                    scores: judgment
                        .assessments
                        .iter()
                        .map(|a| (a.strategy.to_string(), a.score.value()))
                        .collect(),
                    hallucinated,
                    mean_indicator,
                    label_hallucinated: outcome.label_hallucinated,
                    reaction: outcome.reaction.map(|r| {
                        match r {
                            Reaction::ThumbsUp => "up",
                            Reaction::ThumbsDown => "down",
                        }
                        .to_string()
                    }),
                    input_tokens: judgment.total_usage.input_tokens,
                    output_tokens: judgment.total_usage.output_tokens,
                    cost_usd: judgment.total_cost_usd,
                });
            }
            Err(err) => {
                let (input_tokens, output_tokens) = match err {
                    JudgeError::Unjudgeable { usage, .. } => {
                        (usage.input_tokens, usage.output_tokens)
                    }
                    _ => (0, 0),
                };
                unjudgeable.push(UnjudgeableCase {
                    case_id: outcome.case_id.clone(),
                    reason: err.to_string(),
                    input_tokens,
                    output_tokens,
                });
            }
        }
    }

    let effectiveness = match dataset {
        Dataset::Annotated(_) => {
            let confusion = compute_confusion(&verdicts, &labels)?;
            let (precision, recall, f1) = precision_recall_f1(&confusion);
            let per_stratum = strata
                .into_iter()
                .map(|(name, ids)| {
                    let mut cm = ConfusionMatrix::default();
                    for id in &ids {
                        cm.record(verdicts[id], labels[id]);
                    }
                    let (p, r, f) = precision_recall_f1(&cm);
                    (
                        name,
                        StratumReport {
                            cases: ids.len(),
                            confusion: cm,
                            precision: p,
                            recall: r,
                            f1: f,
                        },
                    )
                })
                .collect();
            Some(EffectivenessReport {
                confusion,
                precision,
                recall,
                f1,
                per_stratum,
            })
        }
        Dataset::Preference(_) => None,
    };

    let alignment = match dataset {
        Dataset::Preference(_) => Some(AlignmentReport {
            judged_clean: sets.non_hallucinated.len(),
            preferred: sets.preferred.len(),
            overlap: sets.overlap(),
            consistency: consistency(&sets),
            coverage: coverage(&sets),
        }),
        Dataset::Annotated(_) => None,
    };

    Ok(EvalReport {
        config: ReportConfig {
            strategies: strategies.to_vec(),
            model: judge.model().model_name.clone(),
            threshold,
            dataset_kind: dataset.kind_name().to_string(),
        },
        counts: CaseCounts {
            dataset: dataset.len(),
            evaluated: cases.len(),
            unjudgeable: unjudgeable.len(),
        },
        effectiveness,
        alignment,
        cost: aggregate_cost(&cost_records),
        unjudgeable,
        cases,
    })
}
