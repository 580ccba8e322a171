//! `diffjudge eval`: run a judge over a JSONL dataset and write the
//! evaluation report.

use std::path::PathBuf;

use clap::Args;

use diffjudge_core::eval::{load_dataset, run_evaluation, EvalError};

use crate::config::{CommonOpts, Settings};
use crate::exit::{CliError, EXIT_CLEAN};

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// JSONL dataset: one annotated or preference case per line.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Where to write the JSON report.
    #[arg(long)]
    pub report: PathBuf,
    #[command(flatten)]
    pub common: CommonOpts,
}

pub async fn run(args: &EvalArgs) -> Result<i32, CliError> {
    let settings = Settings::resolve(&args.common).map_err(CliError::usage)?;

    // Ingestion is fail-fast: a malformed line aborts before any judging
    // and no partial report is written.
    let dataset = load_dataset(&args.dataset).map_err(|e| match e {
        EvalError::EmptyDataset => CliError::Usage("no cases in dataset".into()),
        other => CliError::Usage(other.to_string()),
    })?;

    let (judge, _provider) = settings.build_judge().map_err(CliError::usage)?;
    let report = run_evaluation(
        &judge,
        &dataset,
        &settings.strategies,
        settings.threshold,
        settings.concurrency,
    )
    .await
    .map_err(|e| match e {
        EvalError::Judge(err) => CliError::from_judge_error(err).into_provider_flavor(),
        other => CliError::Usage(other.to_string()),
    })?;

    std::fs::write(&args.report, report.to_json_string())
        .map_err(|e| CliError::Usage(format!("writing report {}: {e}", args.report.display())))?;

    print!("{}", report.summary_table());
    println!("report: {}", args.report.display());

    // Unjudgeable cases are reported in the output but do not fail the
    // run; they are already excluded from metric denominators.
    Ok(EXIT_CLEAN)
}
