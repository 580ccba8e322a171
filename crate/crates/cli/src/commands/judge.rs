//! `diffjudge judge`: judge one (diff, comment) pair and gate on the exit
//! code.

use std::path::PathBuf;

use clap::Args;

use diffjudge_core::comment::ReviewComment;
use diffjudge_core::diff::parse_unified_diff;
use diffjudge_core::judge::JudgeVerdict;

use crate::config::{CommonOpts, Settings};
use crate::exit::{CliError, EXIT_CLEAN, EXIT_HALLUCINATED};
use crate::read_input;

#[derive(Debug, Args)]
pub struct JudgeArgs {
    /// Unified diff file ("-" for stdin).
    #[arg(long)]
    pub diff: PathBuf,
    /// Comment text inline.
    #[arg(long, conflicts_with = "comment_file")]
    pub comment: Option<String>,
    /// Comment text from a file ("-" for stdin).
    #[arg(long)]
    pub comment_file: Option<PathBuf>,
    /// Output format.
    #[arg(long, value_parser = ["json", "text"], default_value = "text")]
    pub output: String,
    #[command(flatten)]
    pub common: CommonOpts,
}

pub async fn run(args: &JudgeArgs) -> Result<i32, CliError> {
    let settings = Settings::resolve(&args.common).map_err(CliError::usage)?;

    let diff_text = read_input(&args.diff).map_err(CliError::usage)?;
    let diff = parse_unified_diff(&diff_text)
        .map_err(|e| CliError::Usage(format!("diff is not judgeable context: {e}")))?;

    let comment_text = match (&args.comment, &args.comment_file) {
        (Some(text), None) => text.clone(),
        (None, Some(path)) => read_input(path).map_err(CliError::usage)?,
        _ => {
            return Err(CliError::Usage(
                "provide exactly one of --comment or --comment-file".into(),
            ))
        }
    };
    let comment = ReviewComment::new("cli", comment_text).map_err(|e| {
        CliError::Usage(format!("precondition violated: {e} (comment must be non-empty)"))
    })?;

    let (judge, _provider) = settings.build_judge().map_err(CliError::usage)?;
    let judgment = judge
        .judge(&diff, &comment, &settings.strategies, settings.threshold)
        .await
        .map_err(CliError::from_judge_error)?;

    let hallucinated = judgment.hallucinated();
    match args.output.as_str() {
        "json" => {
            let mut body = serde_json::json!({
                "score": judgment.max_score().value(),
                "hallucinated": hallucinated,
                "threshold": settings.threshold,
                "strategy": settings.strategy_label,
                "model": settings.model.model_name,
                "explanation": judgment.primary_explanation(),
                "usage": {
                    "input_tokens": judgment.total_usage.input_tokens,
                    "output_tokens": judgment.total_usage.output_tokens,
                    "source": judgment.total_usage.source,
                },
                "cost_usd": judgment.total_cost_usd.to_string(),
            });
            if let JudgeVerdict::Ensemble(ensemble) = &judgment.verdict {
                body["ensemble"] = serde_json::json!({
                    "mean_indicator": ensemble.mean_indicator,
                    "members": judgment
                        .assessments
                        .iter()
                        .zip(&ensemble.members)
                        .map(|(a, v)| serde_json::json!({
                            "strategy": a.strategy.to_string(),
                            "score": a.score.value(),
                            "hallucinated": v.hallucinated,
                        }))
                        .collect::<Vec<_>>(),
                });
            }
            println!("{}", serde_json::to_string_pretty(&body).expect("serializes"));
        }
        _ => {
            println!("score: {}", judgment.max_score());
            println!("hallucinated: {hallucinated}");
            println!("threshold: {}", settings.threshold);
            println!("strategy: {}", settings.strategy_label);
            println!("model: {}", settings.model.model_name);
            if let JudgeVerdict::Ensemble(ensemble) = &judgment.verdict {
                let members: Vec<String> = judgment
                    .assessments
                    .iter()
                    .map(|a| format!("{}={}", a.strategy, a.score))
                    .collect();
                println!("members: {}", members.join(" "));
                println!("mean_indicator: {}", ensemble.mean_indicator);
            }
            println!("explanation: {}", judgment.primary_explanation());
            println!(
                "usage: input_tokens={} output_tokens={}",
                judgment.total_usage.input_tokens, judgment.total_usage.output_tokens
            );
            println!("cost_usd: ${}", judgment.total_cost_usd);
        }
    }

    Ok(if hallucinated { EXIT_HALLUCINATED } else { EXIT_CLEAN })
}
