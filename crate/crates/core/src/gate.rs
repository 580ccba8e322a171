//! Gating semantics for using the judge as a delivery safeguard: block
//! hallucinated comments, annotate them, or shadow-log only.

use serde::{Deserialize, Serialize};

use crate::cost::UsdAmount;
use crate::judge::{JudgeVerdict, Judgment};
use crate::judgment::JudgmentError;
use crate::provider::ModelSpec;
use crate::strategies::StrategyKind;

/// Deployment mode of the gate. `DryRun` exists so a rollout can shadow
/// real traffic before anything is blocked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GateMode {
    Block,
    Annotate,
    DryRun,
}

impl std::fmt::Display for GateMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            GateMode::Block => "block",
            GateMode::Annotate => "annotate",
            GateMode::DryRun => "dry-run",
        };
        write!(f, "{name}")
    }
}

impl std::str::FromStr for GateMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "block" => Ok(GateMode::Block),
            "annotate" => Ok(GateMode::Annotate),
            "dry-run" | "dryrun" => Ok(GateMode::DryRun),
            other => Err(format!("unknown gate mode {other:?}")),
        }
    }
}

/// Configuration of the gating layer.
#[derive(Debug, Clone, PartialEq)]
pub struct GateConfig {
    /// A single strategy, or several for the majority ensemble.
    pub strategies: Vec<StrategyKind>,
    pub model: ModelSpec,
    pub threshold: u8,
    pub mode: GateMode,
}

impl GateConfig {
    pub fn validate(&self) -> Result<(), JudgmentError> {
        if !(1..=4).contains(&self.threshold) {
            return Err(JudgmentError::InvalidThreshold(self.threshold));
        }
        Ok(())
    }
}

/// The gate's decision for one comment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GateDecision {
    /// Whether the comment may be delivered. Only `Block` mode ever sets
    /// this false; `Annotate` and `DryRun` always allow while still
    /// attaching the verdict.
    pub allow: bool,
    pub mode: GateMode,
    pub verdict: JudgeVerdict,
    pub explanation: String,
    pub cost_usd: UsdAmount,
    /// Human-readable flag text, set only in `Annotate` mode for
    /// hallucinated comments.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub annotation: Option<String>,
}

/// Apply gate-mode semantics to a finished judgment.
pub fn decide(mode: GateMode, judgment: &Judgment) -> GateDecision {
    let hallucinated = judgment.hallucinated();
    let allow = match mode {
        GateMode::Block => !hallucinated,
        GateMode::Annotate | GateMode::DryRun => true,
    };
    let annotation = (mode == GateMode::Annotate && hallucinated).then(|| {
        format!(
            "flagged: judged context-misaligned (score {} of 4)",
            judgment.max_score()
        )
    });
    GateDecision {
        allow,
        mode,
        verdict: judgment.verdict.clone(),
        explanation: judgment.primary_explanation().to_string(),
        cost_usd: judgment.total_cost_usd,
        annotation,
    }
}
