//! The judging pipeline: build prompts, call the provider, extract the
//! verdict JSON (with one re-ask on malformed output), binarize, and price.

use serde::Serialize;
use thiserror::Error;

use crate::comment::ReviewComment;
use crate::cost::{estimate_cost, CostError, CostRecord, PricingTable, UsdAmount};
use crate::diff::CodeDiff;
use crate::judgment::{
    binarize, ensemble, AlignmentScore, Assessment, EnsembleVerdict, JudgmentError, Verdict,
};
use crate::provider::{
    extract_assessment, CompletionRequest, Gateway, ModelSpec, ProviderError, RetryPolicy, Usage,
    UsageSource,
};
use crate::strategies::{
    build_prompt_bundle, expected_response_schema, FewShotCatalog, PromptError, StrategyKind,
};

const REASK_REMINDER: &str =
    "Your previous reply was not in the required format. Return only the JSON object specified in the system prompt, with no extra text.";

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Judgment(#[from] JudgmentError),
    #[error(transparent)]
    Cost(#[from] CostError),
    /// The model's output stayed unparseable after the single re-ask; the
    /// case carries the tokens it burned so accounting stays honest.
    #[error("unjudgeable ({strategy}): {reason}")]
    Unjudgeable {
        strategy: StrategyKind,
        reason: String,
        usage: Usage,
    },
    #[error("no strategies configured")]
    NoStrategies,
}

/// Single-strategy or ensemble decision.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeVerdict {
    Single(Verdict),
    Ensemble(EnsembleVerdict),
}

impl JudgeVerdict {
    pub fn hallucinated(&self) -> bool {
        match self {
            JudgeVerdict::Single(v) => v.hallucinated,
            JudgeVerdict::Ensemble(v) => v.hallucinated,
        }
    }
}

/// The full outcome of judging one (diff, comment) pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Judgment {
    pub assessments: Vec<Assessment>,
    pub verdict: JudgeVerdict,
    pub threshold: u8,
    /// One priced record per assessment, labeled by strategy and model.
    pub cost_records: Vec<CostRecord>,
    pub total_usage: Usage,
    pub total_cost_usd: UsdAmount,
}

impl Judgment {
    pub fn hallucinated(&self) -> bool {
        self.verdict.hallucinated()
    }

    /// Highest member score: the severity the gate reports.
    pub fn max_score(&self) -> AlignmentScore {
        self.assessments
            .iter()
            .map(|a| a.score)
            .max()
            .unwrap_or(AlignmentScore::MIN)
    }

    /// The explanation backing the reported score: from the single
    /// assessment, or from the first member reaching the maximum score.
    pub fn primary_explanation(&self) -> &str {
        let max = self.max_score();
        self.assessments
            .iter()
            .find(|a| a.score == max)
            .map(|a| a.explanation.as_str())
            .unwrap_or("")
    }
}

/// A configured judge: provider gateway, model, prompt inputs, pricing.
#[derive(Clone)]
pub struct Judge {
    gateway: Gateway,
    model: ModelSpec,
    policy: RetryPolicy,
    catalog: FewShotCatalog,
    pricing: PricingTable,
    temperature: f64,
    max_output_tokens: u32,
}

impl Judge {
    pub fn new(gateway: Gateway, model: ModelSpec) -> Self {
        Judge {
            gateway,
            model,
            policy: RetryPolicy::default(),
            catalog: FewShotCatalog::builtin(),
            pricing: PricingTable::default(),
            temperature: 0.0,
            max_output_tokens: 4096,
        }
    }

    pub fn with_policy(mut self, policy: RetryPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_catalog(mut self, catalog: FewShotCatalog) -> Self {
        self.catalog = catalog;
        self
    }

    pub fn with_pricing(mut self, pricing: PricingTable) -> Self {
        self.pricing = pricing;
        self
    }

    pub fn with_request_params(mut self, temperature: f64, max_output_tokens: u32) -> Self {
        self.temperature = temperature;
        self.max_output_tokens = max_output_tokens;
        self
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn pricing(&self) -> &PricingTable {
        &self.pricing
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    fn request(&self, system_text: String, user_text: String) -> CompletionRequest {
        CompletionRequest {
            system_text,
            user_text,
            temperature: self.temperature,
            max_output_tokens: self.max_output_tokens,
        }
    }

    /// Run one strategy over a pair. On a malformed reply the judge re-asks
    /// once with a terse format reminder; a second failure makes the case
    /// unjudgeable. Token usage accumulates across both attempts.
    pub async fn assess(
        &self,
        diff: &CodeDiff,
        comment: &ReviewComment,
        strategy: StrategyKind,
    ) -> Result<Assessment, JudgeError> {
        let bundle = build_prompt_bundle(strategy, Some(&self.catalog), diff, comment)?;
        let schema = expected_response_schema(strategy);

        let request = self.request(bundle.system_text.clone(), bundle.user_text.clone());
        let first = self.gateway.complete(&self.model, &request, &self.policy).await?;
        let first_extraction = extract_assessment(&first.text, &schema);

        let (extraction, raw_response, usage) = match first_extraction {
            Ok(extraction) => (extraction, first.text, first.usage),
            Err(first_err) => {
                let reask = self.request(
                    bundle.system_text.clone(),
                    format!("{}\n\n{REASK_REMINDER}", bundle.user_text),
                );
                let second = self.gateway.complete(&self.model, &reask, &self.policy).await?;
                let usage = first.usage.combined(second.usage);
                match extract_assessment(&second.text, &schema) {
                    Ok(extraction) => (extraction, second.text, usage),
                    Err(second_err) => {
                        return Err(JudgeError::Unjudgeable {
                            strategy,
                            reason: format!(
                                "first attempt: {first_err}; after re-ask: {second_err}"
                            ),
                            usage,
                        });
                    }
                }
            }
        };

        Ok(Assessment {
            score: extraction.answer,
            explanation: extraction.explanation,
            strategy,
            model: self.model.model_name.clone(),
            usage,
            raw_response,
            extras: extraction.extras,
        })
    }

    /// Judge a pair with one strategy (plain verdict) or several (majority
    /// ensemble), pricing every assessment.
    pub async fn judge(
        &self,
        diff: &CodeDiff,
        comment: &ReviewComment,
        strategies: &[StrategyKind],
        threshold: u8,
    ) -> Result<Judgment, JudgeError> {
        if strategies.is_empty() {
            return Err(JudgeError::NoStrategies);
        }

        let futures = strategies
            .iter()
            .map(|&kind| self.assess(diff, comment, kind));
        let assessments: Vec<Assessment> = futures::future::join_all(futures)
            .await
            .into_iter()
            .collect::<Result<_, _>>()?;

        let verdict = if assessments.len() == 1 {
            JudgeVerdict::Single(binarize(assessments[0].score, threshold)?)
        } else {
            JudgeVerdict::Ensemble(ensemble(&assessments, threshold)?)
        };

        let cost_records: Vec<CostRecord> = assessments
            .iter()
            .map(|a| {
                estimate_cost(a.usage, &self.model.pricing_key, &self.pricing).map(|record| {
                    record.with_labels(a.strategy.to_string(), self.model.model_name.clone())
                })
            })
            .collect::<Result<_, _>>()?;

        let total_usage = assessments
            .iter()
            .map(|a| a.usage)
            .fold(Usage::new(0, 0, UsageSource::ProviderReported), Usage::combined);
        let total_cost_usd = cost_records.iter().map(|r| r.cost_usd).sum();

        Ok(Judgment {
            assessments,
            verdict,
            threshold,
            cost_records,
            total_usage,
            total_cost_usd,
        })
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::diff::parse_unified_diff;
    use crate::provider::{MockProvider, MockScript, ScriptedReply};
    use crate::strategies::ALL_STRATEGIES;

    fn fixture_diff() -> CodeDiff {
        parse_unified_diff(
            "--- a/a.py\n+++ b/a.py\n@@ -1,1 +1,2 @@\n import os\n+import sys\n",
        )
        .unwrap()
    }

    fn judge_with(script: MockScript) -> Judge {
        let provider = Arc::new(MockProvider::new(script).unwrap());
        let gateway = Gateway::new(provider);
        let model = ModelSpec::new("mock", "mock-model", 1_000_000, "gemini-3");
        Judge::new(gateway, model).with_policy(RetryPolicy::immediate(1))
    }

    #[tokio::test]
    async fn scripted_score_three_yields_hallucinated_verdict() {
        let judge = judge_with(MockScript::Sequence(vec![ScriptedReply::text_with_usage(
            r#"{"answer": 3, "explanation": "little support in the diff"}"#,
            1000,
            50,
        )]));
        let comment = ReviewComment::new("c1", "This breaks thread safety.").unwrap();
        let judgment = judge
            .judge(&fixture_diff(), &comment, &[StrategyKind::Direct], 1)
            .await
            .unwrap();
        assert!(judgment.hallucinated());
        assert_eq!(judgment.max_score().value(), 3);
        assert_eq!(judgment.total_usage.input_tokens, 1000);
        // 1000 * $2/1M + 50 * $12/1M = $0.0026.
        assert_eq!(judgment.total_cost_usd.to_string(), "0.0026");
    }

    #[tokio::test]
    async fn malformed_reply_recovers_after_one_reask() {
        let judge = judge_with(MockScript::Sequence(vec![
            ScriptedReply::text_with_usage("sorry, I forgot the format", 100, 10),
            ScriptedReply::text_with_usage(r#"{"answer": 0, "explanation": "all grounded"}"#, 110, 12),
        ]));
        let comment = ReviewComment::new("c1", "ok").unwrap();
        let assessment = judge
            .assess(&fixture_diff(), &comment, StrategyKind::Direct)
            .await
            .unwrap();
        assert_eq!(assessment.score.value(), 0);
        // Usage sums both attempts.
        assert_eq!(assessment.usage.input_tokens, 210);
        assert_eq!(assessment.usage.output_tokens, 22);
    }

    #[tokio::test]
    async fn two_malformed_replies_are_unjudgeable() {
        let judge = judge_with(MockScript::Sequence(vec![
            ScriptedReply::text_with_usage("nope", 100, 10),
            ScriptedReply::text_with_usage("still nope", 100, 10),
        ]));
        let comment = ReviewComment::new("c1", "ok").unwrap();
        let err = judge
            .assess(&fixture_diff(), &comment, StrategyKind::Direct)
            .await
            .unwrap_err();
        match err {
            JudgeError::Unjudgeable { usage, .. } => {
                assert_eq!(usage.input_tokens, 200);
            }
            other => panic!("expected Unjudgeable, got {other:?}"),
        }
    }

    #[tokio::test]
    async fn reask_prompt_carries_the_reminder() {
        let provider = Arc::new(
            MockProvider::new(MockScript::Sequence(vec![
                ScriptedReply::text("garbage"),
                ScriptedReply::text(r#"{"answer": 1, "explanation": "minor"}"#),
            ]))
            .unwrap(),
        );
        let gateway = Gateway::new(provider.clone());
        let judge = Judge::new(
            gateway,
            ModelSpec::new("mock", "m", 1_000_000, "gemini-3"),
        )
        .with_policy(RetryPolicy::immediate(1));
        let comment = ReviewComment::new("c1", "fine").unwrap();
        judge
            .assess(&fixture_diff(), &comment, StrategyKind::Direct)
            .await
            .unwrap();
        let requests = provider.recorded_requests();
        assert_eq!(requests.len(), 2);
        assert!(!requests[0].user_text.contains("Return only the JSON object"));
        assert!(requests[1].user_text.contains("Return only the JSON object"));
    }

    #[tokio::test]
    async fn four_strategy_ensemble_prices_every_member() {
        let judge = judge_with(MockScript::Match {
            entries: vec![],
            default: Some(ScriptedReply::text_with_usage(
                r#"{"answer": 1, "explanation": "slightly off"}"#,
                1000,
                100,
            )),
        });
        let comment = ReviewComment::new("c1", "hm").unwrap();
        let judgment = judge
            .judge(&fixture_diff(), &comment, &ALL_STRATEGIES, 1)
            .await
            .unwrap();
        assert_eq!(judgment.assessments.len(), 4);
        assert!(judgment.hallucinated());
        assert_eq!(judgment.cost_records.len(), 4);
        // 4 * (1000 * $2/1M + 100 * $12/1M) = 4 * $0.0032 = $0.0128.
        assert_eq!(judgment.total_cost_usd.to_string(), "0.0128");
        let JudgeVerdict::Ensemble(ensemble) = &judgment.verdict else {
            panic!("expected ensemble verdict");
        };
        assert_eq!(ensemble.mean_indicator, 1.0);
    }

    #[tokio::test]
    async fn empty_strategy_set_is_rejected() {
        let judge = judge_with(MockScript::Sequence(vec![ScriptedReply::text("x")]));
        let comment = ReviewComment::new("c1", "ok").unwrap();
        let err = judge.judge(&fixture_diff(), &comment, &[], 1).await.unwrap_err();
        assert!(matches!(err, JudgeError::NoStrategies));
    }
}
