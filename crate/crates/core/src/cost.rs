//! Linear per-inference monetary cost model with exact decimal arithmetic.
//!
//! Costs are stored as scaled integers (pico-USD, 1e-12 USD) rather than
//! binary floats, so per-1M-token rates with up to six decimal places
//! price any token count exactly and corpus totals accumulate without
//! rounding error.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::provider::Usage;

const PICO_PER_USD: u128 = 1_000_000_000_000;

/// A non-negative USD amount held in pico-USD.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct UsdAmount(u128);

impl UsdAmount {
    pub const ZERO: UsdAmount = UsdAmount(0);

    pub fn from_pico(pico: u128) -> Self {
        UsdAmount(pico)
    }

    pub fn as_pico(self) -> u128 {
        self.0
    }

    /// Parse a plain decimal string like `"0.004290"` (at most 12 fraction
    /// digits).
    pub fn from_decimal_str(s: &str) -> Result<Self, CostError> {
        let bad = || CostError::InvalidAmount(s.to_string());
        let (int_part, frac_part) = match s.split_once('.') {
            Some((i, f)) => (i, f),
            None => (s, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(bad());
        }
        if frac_part.len() > 12 {
            return Err(CostError::PrecisionTooFine(s.to_string()));
        }
        let int: u128 = if int_part.is_empty() {
            0
        } else {
            int_part.parse().map_err(|_| bad())?
        };
        let frac: u128 = if frac_part.is_empty() {
            0
        } else {
            frac_part.parse().map_err(|_| bad())?
        };
        let scale = 10u128.pow(12 - frac_part.len() as u32);
        Ok(UsdAmount(int * PICO_PER_USD + frac * scale))
    }

    pub fn checked_add(self, other: UsdAmount) -> Option<UsdAmount> {
        self.0.checked_add(other.0).map(UsdAmount)
    }
}

impl std::ops::Add for UsdAmount {
    type Output = UsdAmount;

    fn add(self, other: UsdAmount) -> UsdAmount {
        UsdAmount(self.0 + other.0)
    }
}

impl std::iter::Sum for UsdAmount {
    fn sum<I: Iterator<Item = UsdAmount>>(iter: I) -> UsdAmount {
        iter.fold(UsdAmount::ZERO, |a, b| a + b)
    }
}

impl fmt::Display for UsdAmount {
    /// Canonical decimal form with trailing zeros trimmed: `0.00429`, `2`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let int = self.0 / PICO_PER_USD;
        let frac = self.0 % PICO_PER_USD;
        if frac == 0 {
            return write!(f, "{int}");
        }
        let digits = format!("{frac:012}");
        write!(f, "{int}.{}", digits.trim_end_matches('0'))
    }
}

impl Serialize for UsdAmount {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for UsdAmount {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        UsdAmount::from_decimal_str(&s).map_err(serde::de::Error::custom)
    }
}

/// Per-1M-token prices for one model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PricingRate {
    input_pico_per_token: u128,
    output_pico_per_token: u128,
}

impl PricingRate {
    /// Build a rate from per-1M-token USD prices. Prices finer than six
    /// decimal places cannot be represented exactly per token and are
    /// rejected.
    pub fn per_million(input: UsdAmount, output: UsdAmount) -> Result<Self, CostError> {
        let per_token = |per_million: UsdAmount| {
            let pico = per_million.as_pico();
            if pico % 1_000_000 != 0 {
                return Err(CostError::PrecisionTooFine(per_million.to_string()));
            }
            Ok(pico / 1_000_000)
        };
        Ok(PricingRate {
            input_pico_per_token: per_token(input)?,
            output_pico_per_token: per_token(output)?,
        })
    }

    pub fn input_per_million(&self) -> UsdAmount {
        UsdAmount(self.input_pico_per_token * 1_000_000)
    }

    pub fn output_per_million(&self) -> UsdAmount {
        UsdAmount(self.output_pico_per_token * 1_000_000)
    }
}

/// Pricing keyed by the `pricing_key` of a model spec.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PricingTable {
    entries: BTreeMap<String, PricingRate>,
}

impl Default for PricingTable {
    /// Ships the two judge models: gemini-3 at $2.00/$12.00 per 1M
    /// input/output tokens and gpt-5.1 at $1.25/$10.00.
    fn default() -> Self {
        let mut entries = BTreeMap::new();
        entries.insert(
            "gemini-3".to_string(),
            PricingRate {
                input_pico_per_token: 2_000_000,
                output_pico_per_token: 12_000_000,
            },
        );
        entries.insert(
            "gpt-5.1".to_string(),
            PricingRate {
                input_pico_per_token: 1_250_000,
                output_pico_per_token: 10_000_000,
            },
        );
        PricingTable { entries }
    }
}

impl PricingTable {
    pub fn new(entries: BTreeMap<String, PricingRate>) -> Self {
        PricingTable { entries }
    }

    pub fn get(&self, key: &str) -> Option<&PricingRate> {
        self.entries.get(key)
    }

    pub fn insert(&mut self, key: impl Into<String>, rate: PricingRate) {
        self.entries.insert(key.into(), rate);
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Load a table from JSON mapping keys to per-1M-token USD prices:
    /// `{"gemini-3": {"input_per_million_usd": "2.00", "output_per_million_usd": 12.0}}`.
    /// Values may be JSON numbers or decimal strings.
    pub fn from_json_str(json: &str) -> Result<Self, CostError> {
        #[derive(Deserialize)]
        struct RawRate {
            input_per_million_usd: serde_json::Value,
            output_per_million_usd: serde_json::Value,
        }
        let raw: BTreeMap<String, RawRate> =
            serde_json::from_str(json).map_err(|e| CostError::InvalidPricingFile(e.to_string()))?;
        let mut entries = BTreeMap::new();
        for (key, rate) in raw {
            let parse = |v: &serde_json::Value| -> Result<UsdAmount, CostError> {
                match v {
                    serde_json::Value::String(s) => UsdAmount::from_decimal_str(s),
                    serde_json::Value::Number(n) => UsdAmount::from_decimal_str(&n.to_string()),
                    other => Err(CostError::InvalidPricingFile(format!(
                        "price for {key:?} must be a number or string, got {other}"
                    ))),
                }
            };
            entries.insert(
                key.clone(),
                PricingRate::per_million(
                    parse(&rate.input_per_million_usd)?,
                    parse(&rate.output_per_million_usd)?,
                )?,
            );
        }
        Ok(PricingTable { entries })
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, CostError> {
        let json = std::fs::read_to_string(path)
            .map_err(|e| CostError::InvalidPricingFile(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&json)
    }
}

/// The priced outcome of one inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRecord {
    pub usage: Usage,
    pub pricing_key: String,
    pub cost_usd: UsdAmount,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
}

impl CostRecord {
    pub fn with_labels(
        mut self,
        strategy: impl Into<String>,
        model: impl Into<String>,
    ) -> CostRecord {
        self.strategy = Some(strategy.into());
        self.model = Some(model.into());
        self
    }
}

/// Corpus-level cost aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    pub count: usize,
    pub total_usd: UsdAmount,
    /// Total divided by count, rounded half-up to a pico-USD; absent for an
    /// empty input.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_usd: Option<UsdAmount>,
    pub total_input_tokens: u64,
    pub total_output_tokens: u64,
    /// Per-(strategy, model) breakdown keyed as `"strategy/model"`, present
    /// only for records carrying those labels.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub groups: BTreeMap<String, GroupCost>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCost {
    pub count: usize,
    pub total_usd: UsdAmount,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_usd: Option<UsdAmount>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CostError {
    #[error("unknown pricing key {0:?}")]
    UnknownPricingKey(String),
    #[error("invalid USD amount {0:?}")]
    InvalidAmount(String),
    #[error("price {0:?} needs more than 6 decimal places per token-million; not exactly representable")]
    PrecisionTooFine(String),
    #[error("invalid pricing file: {0}")]
    InvalidPricingFile(String),
}

/// Price one usage record: `cost = c_in * input_tokens + c_out * output_tokens`,
/// exact in decimal.
pub fn estimate_cost(
    usage: Usage,
    pricing_key: &str,
    table: &PricingTable,
) -> Result<CostRecord, CostError> {
    let rate = table
        .get(pricing_key)
        .ok_or_else(|| CostError::UnknownPricingKey(pricing_key.to_string()))?;
    let pico = usage.input_tokens as u128 * rate.input_pico_per_token
        + usage.output_tokens as u128 * rate.output_pico_per_token;
    Ok(CostRecord {
        usage,
        pricing_key: pricing_key.to_string(),
        cost_usd: UsdAmount(pico),
        strategy: None,
        model: None,
    })
}

fn mean_pico(total: u128, count: usize) -> UsdAmount {
    // Round half-up at the pico digit.
    UsdAmount((total + count as u128 / 2) / count as u128)
}

/// Sum and average a set of cost records, with per-(strategy, model)
/// breakdowns where that metadata is present.
pub fn aggregate_cost(records: &[CostRecord]) -> CostSummary {
    let total: u128 = records.iter().map(|r| r.cost_usd.as_pico()).sum();
    let mut groups: BTreeMap<String, (usize, u128)> = BTreeMap::new();
    for record in records {
        if record.strategy.is_none() && record.model.is_none() {
            continue;
        }
        let key = format!(
            "{}/{}",
            record.strategy.as_deref().unwrap_or("-"),
            record.model.as_deref().unwrap_or("-")
        );
        let entry = groups.entry(key).or_insert((0, 0));
        entry.0 += 1;
        entry.1 += record.cost_usd.as_pico();
    }
    CostSummary {
        count: records.len(),
        total_usd: UsdAmount(total),
        mean_usd: (!records.is_empty()).then(|| mean_pico(total, records.len())),
        total_input_tokens: records.iter().map(|r| r.usage.input_tokens).sum(),
        total_output_tokens: records.iter().map(|r| r.usage.output_tokens).sum(),
        groups: groups
            .into_iter()
            .map(|(key, (count, total))| {
                (
                    key,
                    GroupCost {
                        count,
                        total_usd: UsdAmount(total),
                        mean_usd: Some(mean_pico(total, count)),
                    },
                )
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::{Usage, UsageSource};

    fn usage(input: u64, output: u64) -> Usage {
        Usage::new(input, output, UsageSource::ProviderReported)
    }

    #[test]
    fn zero_tokens_cost_nothing() {
        let record = estimate_cost(usage(0, 0), "gemini-3", &PricingTable::default()).unwrap();
        assert_eq!(record.cost_usd, UsdAmount::ZERO);
        assert_eq!(record.cost_usd.to_string(), "0");
    }

    #[test]
    fn direct_assessment_token_counts_price_exactly() {
        let table = PricingTable::default();
        // 2784 * $1.25/1M + 81 * $10.00/1M = $0.003480 + $0.000810 = $0.004290.
        let gpt = estimate_cost(usage(2784, 81), "gpt-5.1", &table).unwrap();
        assert_eq!(gpt.cost_usd, UsdAmount::from_decimal_str("0.004290").unwrap());
        assert_eq!(gpt.cost_usd.to_string(), "0.00429");

        // 3315 * $2.00/1M + 89 * $12.00/1M = $0.006630 + $0.001068 = $0.007698.
        let gemini = estimate_cost(usage(3315, 89), "gemini-3", &table).unwrap();
        assert_eq!(gemini.cost_usd, UsdAmount::from_decimal_str("0.007698").unwrap());
        assert_eq!(gemini.cost_usd.to_string(), "0.007698");
    }

    #[test]
    fn unknown_key_is_an_error() {
        let err = estimate_cost(usage(1, 1), "claude", &PricingTable::default()).unwrap_err();
        assert_eq!(err, CostError::UnknownPricingKey("claude".into()));
    }

    #[test]
    fn linearity_and_homogeneity_hold_exactly() {
        let table = PricingTable::default();
        for key in ["gemini-3", "gpt-5.1"] {
            for (a_in, a_out, b_in, b_out) in
                [(1u64, 1u64, 2u64, 3u64), (2784, 81, 3315, 89), (0, 7, 7, 0)]
            {
                let lhs = estimate_cost(usage(a_in + b_in, a_out + b_out), key, &table).unwrap();
                let a = estimate_cost(usage(a_in, a_out), key, &table).unwrap();
                let b = estimate_cost(usage(b_in, b_out), key, &table).unwrap();
                assert_eq!(lhs.cost_usd, a.cost_usd + b.cost_usd);

                let doubled = estimate_cost(usage(a_in * 2, a_out * 2), key, &table).unwrap();
                assert_eq!(doubled.cost_usd.as_pico(), a.cost_usd.as_pico() * 2);
            }
        }
    }

    #[test]
    fn aggregate_matches_forced_arithmetic() {
        let table = PricingTable::default();
        // $0.004 + $0.004 + $0.010 = $0.018 total, $0.006 mean.
        let records: Vec<CostRecord> = [(2000u64, 0u64), (2000, 0), (5000, 0)]
            .iter()
            .map(|&(i, o)| estimate_cost(usage(i, o), "gemini-3", &table).unwrap())
            .collect();
        let summary = aggregate_cost(&records);
        assert_eq!(summary.total_usd.to_string(), "0.018");
        assert_eq!(summary.mean_usd.unwrap().to_string(), "0.006");
        assert_eq!(summary.count, 3);
        assert_eq!(summary.total_input_tokens, 9000);
    }

    #[test]
    fn empty_aggregate_is_zero_with_no_mean() {
        let summary = aggregate_cost(&[]);
        assert_eq!(summary.total_usd, UsdAmount::ZERO);
        assert_eq!(summary.mean_usd, None);
        assert_eq!(summary.count, 0);
    }

    #[test]
    fn groups_key_by_strategy_and_model() {
        let table = PricingTable::default();
        let mk = |s: &str, tokens: u64| {
            estimate_cost(usage(tokens, 0), "gemini-3", &table)
                .unwrap()
                .with_labels(s, "gemini-3")
        };
        let summary = aggregate_cost(&[mk("direct", 1000), mk("direct", 3000), mk("tree-of-thoughts", 2000)]);
        assert_eq!(summary.groups.len(), 2);
        let direct = &summary.groups["direct/gemini-3"];
        assert_eq!(direct.count, 2);
        assert_eq!(direct.total_usd.to_string(), "0.008");
        assert_eq!(direct.mean_usd.unwrap().to_string(), "0.004");
    }

    #[test]
    fn decimal_parsing_and_display_round_trip() {
        for s in ["0", "1", "0.004290", "0.007698", "12.5", "0.000000000001"] {
            let amount = UsdAmount::from_decimal_str(s).unwrap();
            let rendered = amount.to_string();
            assert_eq!(UsdAmount::from_decimal_str(&rendered).unwrap(), amount, "{s}");
        }
        assert!(UsdAmount::from_decimal_str("0.0000000000001").is_err());
        assert!(UsdAmount::from_decimal_str("abc").is_err());
        assert!(UsdAmount::from_decimal_str("").is_err());
    }

    #[test]
    fn pricing_file_accepts_numbers_and_strings() {
        let table = PricingTable::from_json_str(
            r#"{
                "custom": {"input_per_million_usd": "0.50", "output_per_million_usd": 1.5},
                "gpt-5.1": {"input_per_million_usd": 1.25, "output_per_million_usd": 10}
            }"#,
        )
        .unwrap();
        let record = estimate_cost(usage(1_000_000, 1_000_000), "custom", &table).unwrap();
        assert_eq!(record.cost_usd.to_string(), "2");
        let gpt = estimate_cost(usage(2784, 81), "gpt-5.1", &table).unwrap();
        assert_eq!(gpt.cost_usd.to_string(), "0.00429");
    }

    #[test]
    fn sub_micro_per_token_prices_are_rejected() {
        // $0.0000001 per 1M tokens would be 1e-13 USD per token.
        let err = PricingTable::from_json_str(
            r#"{"x": {"input_per_million_usd": "0.0000001", "output_per_million_usd": 1}}"#,
        )
        .unwrap_err();
        assert!(matches!(err, CostError::PrecisionTooFine(_)));
    }
}
