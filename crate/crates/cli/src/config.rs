//! Configuration resolution: built-in defaults, then an optional TOML
//! config file, then CLI flags, highest precedence last.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use diffjudge_core::cost::PricingTable;
use diffjudge_core::judge::Judge;
use diffjudge_core::provider::{
    AuditLog, ChatProvider, Gateway, HttpProvider, MockProvider, ModelSpec,
};
use diffjudge_core::strategies::{FewShotCatalog, StrategyKind, ALL_STRATEGIES};

pub const DEFAULT_CONFIG_FILE: &str = "diffjudge.toml";

/// One model the judge can run on.
#[derive(Debug, Clone, Deserialize, PartialEq)]
pub struct ModelConfig {
    pub provider_id: String,
    pub model_name: String,
    pub context_window: u64,
    pub pricing_key: String,
    #[serde(default)]
    pub base_url: Option<String>,
}

impl ModelConfig {
    pub fn to_spec(&self) -> ModelSpec {
        ModelSpec::new(
            self.provider_id.clone(),
            self.model_name.clone(),
            self.context_window,
            self.pricing_key.clone(),
        )
    }
}

/// The two judge models shipped as defaults, keyed by short name.
pub fn builtin_models() -> BTreeMap<String, ModelConfig> {
    let mut models = BTreeMap::new();
    models.insert(
        "gemini-3".to_string(),
        ModelConfig {
            provider_id: "google".into(),
            model_name: "gemini-3-pro-preview".into(),
            context_window: 1_000_000,
            pricing_key: "gemini-3".into(),
            base_url: Some("https://generativelanguage.googleapis.com/v1beta/openai".into()),
        },
    );
    models.insert(
        "gpt-5.1".to_string(),
        ModelConfig {
            provider_id: "openai".into(),
            model_name: "gpt-5.1-2025-11-13".into(),
            context_window: 400_000,
            pricing_key: "gpt-5.1".into(),
            base_url: Some("https://api.openai.com/v1".into()),
        },
    );
    models
}

/// The optional TOML config file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub strategy: Option<String>,
    pub model: Option<String>,
    pub threshold: Option<u8>,
    pub concurrency: Option<usize>,
    pub pricing_file: Option<PathBuf>,
    pub fewshot_file: Option<PathBuf>,
    pub audit_log: Option<PathBuf>,
    pub mock_script: Option<PathBuf>,
    pub request_timeout_secs: Option<u64>,
    pub max_output_tokens: Option<u32>,
    pub temperature: Option<f64>,
    #[serde(default)]
    pub models: BTreeMap<String, ModelConfig>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config file {}", path.display()))
    }
}

/// Flags shared by every subcommand; `None` means "not set on the CLI".
#[derive(Debug, Default, Clone, clap::Args)]
pub struct CommonOpts {
    /// Config file path (default: ./diffjudge.toml when present).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Strategy: direct, few-shot, multi-step, tree-of-thoughts, or
    /// "ensemble" for the four-strategy majority vote.
    #[arg(long)]
    pub strategy: Option<String>,
    /// Model short name from the model registry.
    #[arg(long)]
    pub model: Option<String>,
    /// Minimum score judged hallucinated (1..=4).
    #[arg(long)]
    pub threshold: Option<u8>,
    /// Maximum concurrent in-flight judgments.
    #[arg(long)]
    pub concurrency: Option<usize>,
    /// Pricing file (JSON) overriding/extending the built-in rates.
    #[arg(long)]
    pub pricing: Option<PathBuf>,
    /// Few-shot example catalog file (JSON, five records).
    #[arg(long)]
    pub fewshot: Option<PathBuf>,
    /// Append request/response transcripts to this JSONL file.
    #[arg(long)]
    pub audit_log: Option<PathBuf>,
    /// Serve judgments from a scripted mock instead of a live provider.
    #[arg(long)]
    pub mock_script: Option<PathBuf>,
}

/// Fully resolved runtime settings.
#[derive(Debug, Clone)]
pub struct Settings {
    pub strategies: Vec<StrategyKind>,
    /// "ensemble" or the single strategy name; for reports and output.
    pub strategy_label: String,
    pub model_key: String,
    pub model: ModelConfig,
    pub threshold: u8,
    pub concurrency: usize,
    pub pricing: PricingTable,
    pub catalog: FewShotCatalog,
    pub audit_log: Option<PathBuf>,
    pub mock_script: Option<PathBuf>,
    pub request_timeout: Duration,
    pub max_output_tokens: u32,
    pub temperature: f64,
}

impl Settings {
    /// Merge defaults <- config file <- CLI flags.
    pub fn resolve(opts: &CommonOpts) -> Result<Settings> {
        let file = match &opts.config {
            Some(path) => FileConfig::load(path)?,
            None => {
                let default = Path::new(DEFAULT_CONFIG_FILE);
                if default.exists() {
                    FileConfig::load(default)?
                } else {
                    FileConfig::default()
                }
            }
        };

        let mut models = builtin_models();
        models.extend(file.models.clone());

        let strategy_label = opts
            .strategy
            .clone()
            .or(file.strategy.clone())
            .unwrap_or_else(|| "tree-of-thoughts".to_string());
        let strategies: Vec<StrategyKind> = if strategy_label.eq_ignore_ascii_case("ensemble") {
            ALL_STRATEGIES.to_vec()
        } else {
            vec![strategy_label
                .parse()
                .map_err(|e| anyhow::anyhow!("--strategy: {e}"))?]
        };

        let model_key = opts
            .model
            .clone()
            .or(file.model.clone())
            .unwrap_or_else(|| "gemini-3".to_string());
        let model = models
            .get(&model_key)
            .cloned()
            .with_context(|| {
                format!(
                    "unknown model {:?}; known models: {}",
                    model_key,
                    models.keys().cloned().collect::<Vec<_>>().join(", ")
                )
            })?;

        let threshold = opts.threshold.or(file.threshold).unwrap_or(1);
        if !(1..=4).contains(&threshold) {
            bail!("threshold must be in 1..=4, got {threshold}");
        }

        let mut pricing = PricingTable::default();
        if let Some(path) = opts.pricing.clone().or(file.pricing_file.clone()) {
            let overrides = PricingTable::from_path(&path)
                .map_err(|e| anyhow::anyhow!("pricing file: {e}"))?;
            let keys: Vec<String> = overrides.keys().map(str::to_string).collect();
            for key in keys {
                pricing.insert(key.clone(), *overrides.get(&key).unwrap());
            }
        }
        if pricing.get(&model.pricing_key).is_none() {
            bail!(
                "model {:?} uses pricing key {:?} which is not in the pricing table",
                model_key,
                model.pricing_key
            );
        }

        let catalog = match opts.fewshot.clone().or(file.fewshot_file.clone()) {
            Some(path) => FewShotCatalog::from_path(&path)
                .map_err(|e| anyhow::anyhow!("few-shot catalog: {e}"))?,
            None => FewShotCatalog::builtin(),
        };

        Ok(Settings {
            strategies,
            strategy_label: strategy_label.to_ascii_lowercase(),
            model_key,
            model,
            threshold,
            concurrency: opts.concurrency.or(file.concurrency).unwrap_or(4).max(1),
            pricing,
            catalog,
            audit_log: opts.audit_log.clone().or(file.audit_log.clone()),
            mock_script: opts.mock_script.clone().or(file.mock_script.clone()),
            request_timeout: Duration::from_secs(file.request_timeout_secs.unwrap_or(120)),
            max_output_tokens: file.max_output_tokens.unwrap_or(4096),
            temperature: file.temperature.unwrap_or(0.0),
        })
    }

    /// Build the provider (mock or HTTP) and the judge around it.
    pub fn build_judge(&self) -> Result<(Judge, Arc<dyn ChatProvider>)> {
        let provider: Arc<dyn ChatProvider> = match &self.mock_script {
            Some(path) => Arc::new(
                MockProvider::from_path(path).map_err(|e| anyhow::anyhow!(e.to_string()))?,
            ),
            None => {
                let base_url = self.model.base_url.clone().with_context(|| {
                    format!("model {:?} has no base_url configured", self.model_key)
                })?;
                Arc::new(
                    HttpProvider::new(
                        self.model.provider_id.clone(),
                        base_url,
                        self.request_timeout,
                    )
                    .map_err(|e| anyhow::anyhow!(e.to_string()))?,
                )
            }
        };

        let mut gateway = Gateway::with_concurrency(provider.clone(), self.concurrency);
        if let Some(path) = &self.audit_log {
            let log = AuditLog::open(path)
                .with_context(|| format!("opening audit log {}", path.display()))?;
            gateway = gateway.with_audit_log(log);
        }

        let judge = Judge::new(gateway, self.model.to_spec())
            .with_pricing(self.pricing.clone())
            .with_catalog(self.catalog.clone())
            .with_request_params(self.temperature, self.max_output_tokens);
        Ok((judge, provider))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve_without_any_input() {
        let settings = Settings::resolve(&CommonOpts::default()).unwrap();
        assert_eq!(settings.strategy_label, "tree-of-thoughts");
        assert_eq!(settings.strategies, vec![StrategyKind::TreeOfThoughts]);
        assert_eq!(settings.model_key, "gemini-3");
        assert_eq!(settings.threshold, 1);
        assert_eq!(settings.concurrency, 4);
    }

    #[test]
    fn ensemble_expands_to_all_four_strategies() {
        let opts = CommonOpts {
            strategy: Some("ensemble".into()),
            ..Default::default()
        };
        let settings = Settings::resolve(&opts).unwrap();
        assert_eq!(settings.strategies.len(), 4);
    }

    #[test]
    fn cli_flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let config_path = dir.path().join("diffjudge.toml");
        std::fs::write(
            &config_path,
            "strategy = \"direct\"\nmodel = \"gpt-5.1\"\nthreshold = 3\n",
        )
        .unwrap();

        let from_file = Settings::resolve(&CommonOpts {
            config: Some(config_path.clone()),
            ..Default::default()
        })
        .unwrap();
        assert_eq!(from_file.strategy_label, "direct");
        assert_eq!(from_file.model_key, "gpt-5.1");
        assert_eq!(from_file.threshold, 3);

        let overridden = Settings::resolve(&CommonOpts {
            config: Some(config_path),
            strategy: Some("multi-step".into()),
            threshold: Some(2),
            ..Default::default()
        })
        .unwrap();
        assert_eq!(overridden.strategy_label, "multi-step");
        assert_eq!(overridden.model_key, "gpt-5.1");
        assert_eq!(overridden.threshold, 2);
    }

    #[test]
    fn bad_inputs_are_rejected() {
        assert!(Settings::resolve(&CommonOpts {
            strategy: Some("bogus".into()),
            ..Default::default()
        })
        .is_err());
        assert!(Settings::resolve(&CommonOpts {
            model: Some("claude".into()),
            ..Default::default()
        })
        .is_err());
        assert!(Settings::resolve(&CommonOpts {
            threshold: Some(0),
            ..Default::default()
        })
        .is_err());
    }

    #[test]
    fn custom_models_from_config_are_usable() {
        let dir = tempfile::tempdir().unwrap();
        let config_path = dir.path().join("c.toml");
        std::fs::write(
            &config_path,
            r#"
model = "local"

[models.local]
provider_id = "local"
model_name = "local-judge"
context_window = 32000
pricing_key = "gemini-3"
"#,
        )
        .unwrap();
        let settings = Settings::resolve(&CommonOpts {
            config: Some(config_path),
            ..Default::default()
        })
        .unwrap();
        assert_eq!(settings.model.model_name, "local-judge");
        // No base_url and no mock: building the judge must fail loudly.
        assert!(settings.build_judge().is_err());
    }
}
