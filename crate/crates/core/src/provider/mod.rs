//! LLM completion gateway: one abstraction over chat-completion services
//! with pre-flight context checks, bounded retries, bounded in-flight
//! concurrency, token-usage provenance, and optional transcript auditing.

mod extract;
mod http;
mod mock;

pub use extract::{estimate_tokens, extract_assessment, ExtractError, Extraction};
pub use http::{api_key_env_var, HttpProvider};
pub use mock::{MockProvider, MockScript, RecordedRequest, ScriptedError, ScriptedReply};

use std::sync::Arc;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tokio::sync::Semaphore;

/// A judge model reachable through some provider.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Which provider serves this model; also selects the API-key env var.
    pub provider_id: String,
    pub model_name: String,
    pub context_window: u64,
    /// Key into the pricing table.
    pub pricing_key: String,
}

impl ModelSpec {
    pub fn new(
        provider_id: impl Into<String>,
        model_name: impl Into<String>,
        context_window: u64,
        pricing_key: impl Into<String>,
    ) -> Self {
        ModelSpec {
            provider_id: provider_id.into(),
            model_name: model_name.into(),
            context_window,
            pricing_key: pricing_key.into(),
        }
    }
}

/// One completion call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub system_text: String,
    pub user_text: String,
    /// Judging defaults to 0: each judgment is a single
    /// deterministic-intent inference.
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl CompletionRequest {
    pub fn new(system_text: impl Into<String>, user_text: impl Into<String>) -> Self {
        CompletionRequest {
            system_text: system_text.into(),
            user_text: user_text.into(),
            temperature: 0.0,
            max_output_tokens: 4096,
        }
    }
}

/// Where token counts came from. Cost accounting must never receive
/// untagged counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UsageSource {
    ProviderReported,
    Estimated,
}

/// Token counts for one or more completion calls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub source: UsageSource,
}

impl Usage {
    pub fn new(input_tokens: u64, output_tokens: u64, source: UsageSource) -> Self {
        Usage {
            input_tokens,
            output_tokens,
            source,
        }
    }

    /// Sum two usages. The result only counts as provider-reported when
    /// both sides were.
    pub fn combined(self, other: Usage) -> Usage {
        let source = match (self.source, other.source) {
            (UsageSource::ProviderReported, UsageSource::ProviderReported) => {
                UsageSource::ProviderReported
            }
            _ => UsageSource::Estimated,
        };
        Usage {
            input_tokens: self.input_tokens + other.input_tokens,
            output_tokens: self.output_tokens + other.output_tokens,
            source,
        }
    }
}

/// A provider's reply.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletionResponse {
    pub text: String,
    pub usage: Usage,
    pub latency: Duration,
}

/// Error classes used to decide retryability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    Timeout,
    RateLimited,
    AuthFailure,
    ContextOverflow,
    ServerError,
    Transport,
    Protocol,
    ScriptExhausted,
    RetriesExhausted,
    InvalidConfig,
}

#[derive(Debug, Error, PartialEq)]
pub enum ProviderError {
    #[error("request timed out")]
    Timeout,
    #[error("rate limited by provider")]
    RateLimited,
    #[error("authentication failed: {0}")]
    AuthFailure(String),
    #[error("context overflow: {0}")]
    ContextOverflow(String),
    #[error("provider returned status {status}: {message}")]
    ServerError { status: u16, message: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("unintelligible provider response: {0}")]
    Protocol(String),
    #[error("mock script exhausted (no reply for this request)")]
    ScriptExhausted,
    #[error("retries exhausted after {attempts} attempt(s): {last}")]
    RetriesExhausted { attempts: u32, last: Box<ProviderError> },
    #[error("invalid provider configuration: {0}")]
    InvalidConfig(String),
}

impl ProviderError {
    pub fn class(&self) -> ErrorClass {
        match self {
            ProviderError::Timeout => ErrorClass::Timeout,
            ProviderError::RateLimited => ErrorClass::RateLimited,
            ProviderError::AuthFailure(_) => ErrorClass::AuthFailure,
            ProviderError::ContextOverflow(_) => ErrorClass::ContextOverflow,
            ProviderError::ServerError { .. } => ErrorClass::ServerError,
            ProviderError::Transport(_) => ErrorClass::Transport,
            ProviderError::Protocol(_) => ErrorClass::Protocol,
            ProviderError::ScriptExhausted => ErrorClass::ScriptExhausted,
            ProviderError::RetriesExhausted { .. } => ErrorClass::RetriesExhausted,
            ProviderError::InvalidConfig(_) => ErrorClass::InvalidConfig,
        }
    }
}

/// Retry behavior for transient provider errors.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    max_attempts: u32,
    base_backoff: Duration,
    backoff_multiplier: f64,
    retry_on: Vec<ErrorClass>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            base_backoff: Duration::from_millis(500),
            backoff_multiplier: 2.0,
            retry_on: vec![ErrorClass::Timeout, ErrorClass::RateLimited, ErrorClass::ServerError],
        }
    }
}

impl RetryPolicy {
    pub fn new(
        max_attempts: u32,
        base_backoff: Duration,
        backoff_multiplier: f64,
        retry_on: Vec<ErrorClass>,
    ) -> Result<Self, ProviderError> {
        if max_attempts < 1 {
            return Err(ProviderError::InvalidConfig(
                "max_attempts must be at least 1".into(),
            ));
        }
        if backoff_multiplier < 1.0 {
            return Err(ProviderError::InvalidConfig(
                "backoff multiplier below 1 would make delays decrease".into(),
            ));
        }
        Ok(RetryPolicy {
            max_attempts,
            base_backoff,
            backoff_multiplier,
            retry_on,
        })
    }

    /// A policy that never sleeps, for tests and mock-backed runs.
    pub fn immediate(max_attempts: u32) -> Self {
        RetryPolicy {
            max_attempts: max_attempts.max(1),
            base_backoff: Duration::ZERO,
            backoff_multiplier: 1.0,
            ..RetryPolicy::default()
        }
    }

    pub fn max_attempts(&self) -> u32 {
        self.max_attempts
    }

    fn retries(&self, class: ErrorClass) -> bool {
        self.retry_on.contains(&class)
    }

    /// Delay before retry number `attempt` (1-based failed attempt).
    /// Non-decreasing in `attempt` since the multiplier is at least 1.
    fn backoff_for(&self, attempt: u32) -> Duration {
        self.base_backoff
            .mul_f64(self.backoff_multiplier.powi(attempt.saturating_sub(1) as i32))
    }
}

/// A chat-completion backend.
#[async_trait]
pub trait ChatProvider: Send + Sync {
    /// Issue exactly one completion call; the gateway handles retries.
    async fn complete_once(
        &self,
        model: &ModelSpec,
        request: &CompletionRequest,
    ) -> Result<CompletionResponse, ProviderError>;

    /// Whether the provider can accept calls (credentials present, mock
    /// active). Must not spend tokens.
    fn ready(&self) -> Result<(), ProviderError>;
}

/// Stable identity of a request, for keyed mock scripts and audit
/// correlation.
pub fn request_fingerprint(system_text: &str, user_text: &str, model_name: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(system_text.as_bytes());
    hasher.update([0]);
    hasher.update(user_text.as_bytes());
    hasher.update([0]);
    hasher.update(model_name.as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Append-only line-delimited JSON transcript log.
pub struct AuditLog {
    file: std::sync::Mutex<std::fs::File>,
}

impl AuditLog {
    pub fn open(path: &std::path::Path) -> std::io::Result<Self> {
        let file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        Ok(AuditLog {
            file: std::sync::Mutex::new(file),
        })
    }

    fn append(&self, entry: &serde_json::Value) {
        use std::io::Write;
        let mut line = entry.to_string();
        line.push('\n');
        if let Ok(mut file) = self.file.lock() {
            // Audit failures must not fail the judgment itself.
            let _ = file.write_all(line.as_bytes());
        }
    }
}

/// The completion gateway: pre-flight context check, bounded concurrency,
/// retries with non-decreasing backoff, optional transcript audit.
#[derive(Clone)]
pub struct Gateway {
    provider: Arc<dyn ChatProvider>,
    permits: Arc<Semaphore>,
    audit: Option<Arc<AuditLog>>,
}

impl Gateway {
    /// Default in-flight limit of 4 concurrent requests.
    pub fn new(provider: Arc<dyn ChatProvider>) -> Self {
        Self::with_concurrency(provider, 4)
    }

    pub fn with_concurrency(provider: Arc<dyn ChatProvider>, limit: usize) -> Self {
        Gateway {
            provider,
            permits: Arc::new(Semaphore::new(limit.max(1))),
            audit: None,
        }
    }

    pub fn with_audit_log(mut self, log: AuditLog) -> Self {
        self.audit = Some(Arc::new(log));
        self
    }

    pub fn provider(&self) -> &dyn ChatProvider {
        self.provider.as_ref()
    }

    /// Complete a request, retrying per policy. The pre-flight token
    /// estimate runs before any network activity; a request that cannot
    /// fit the model's context window never leaves the process.
    pub async fn complete(
        &self,
        model: &ModelSpec,
        request: &CompletionRequest,
        policy: &RetryPolicy,
    ) -> Result<CompletionResponse, ProviderError> {
        let estimated =
            estimate_tokens(&request.system_text) + estimate_tokens(&request.user_text);
        if estimated > model.context_window {
            return Err(ProviderError::ContextOverflow(format!(
                "estimated {estimated} prompt tokens exceed context window {}",
                model.context_window
            )));
        }

        let started = Instant::now();
        let mut attempt = 1u32;
        loop {
            let outcome = {
                let _permit = self
                    .permits
                    .acquire()
                    .await
                    .map_err(|_| ProviderError::Transport("gateway closed".into()))?;
                self.provider.complete_once(model, request).await
            };
            self.audit_attempt(model, request, attempt, &outcome, started.elapsed());
            match outcome {
                Ok(response) => return Ok(response),
                Err(err) => {
                    if !policy.retries(err.class()) {
                        return Err(err);
                    }
                    if attempt >= policy.max_attempts {
                        return Err(ProviderError::RetriesExhausted {
                            attempts: attempt,
                            last: Box::new(err),
                        });
                    }
                    tokio::time::sleep(policy.backoff_for(attempt)).await;
                    attempt += 1;
                }
            }
        }
    }

    fn audit_attempt(
        &self,
        model: &ModelSpec,
        request: &CompletionRequest,
        attempt: u32,
        outcome: &Result<CompletionResponse, ProviderError>,
        elapsed: Duration,
    ) {
        let Some(audit) = &self.audit else { return };
        let ts = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let fingerprint =
            request_fingerprint(&request.system_text, &request.user_text, &model.model_name);
        let mut entry = serde_json::json!({
            "ts": ts,
            "model": model.model_name,
            "provider": model.provider_id,
            "attempt": attempt,
            "fingerprint": fingerprint,
            "elapsed_ms": elapsed.as_millis() as u64,
            "request": {
                "system_text": request.system_text,
                "user_text": request.user_text,
                "temperature": request.temperature,
                "max_output_tokens": request.max_output_tokens,
            },
        });
        match outcome {
            Ok(response) => {
                entry["response"] = serde_json::json!({
                    "text": response.text,
                    "usage": response.usage,
                });
            }
            Err(err) => {
                entry["error"] = serde_json::Value::String(err.to_string());
            }
        }
        audit.append(&entry);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> ModelSpec {
        ModelSpec::new("mock", "test-model", 1_000_000, "gemini-3")
    }

    fn reply(text: &str) -> ScriptedReply {
        ScriptedReply::text(text)
    }

    #[tokio::test]
    async fn scripted_reply_is_returned_verbatim() {
        let provider = MockProvider::new(MockScript::Sequence(vec![ScriptedReply::text_with_usage(
            "hello", 100, 10,
        )]))
        .unwrap();
        let gateway = Gateway::new(Arc::new(provider));
        let response = gateway
            .complete(&model(), &CompletionRequest::new("s", "u"), &RetryPolicy::immediate(1))
            .await
            .unwrap();
        assert_eq!(response.text, "hello");
        assert_eq!(response.usage, Usage::new(100, 10, UsageSource::ProviderReported));
    }

    #[tokio::test]
    async fn two_rate_limits_then_success_within_three_attempts() {
        let provider = Arc::new(
            MockProvider::new(MockScript::Sequence(vec![
                ScriptedReply::fail(ScriptedError::RateLimited),
                ScriptedReply::fail(ScriptedError::RateLimited),
                reply("ok"),
            ]))
            .unwrap(),
        );
        let gateway = Gateway::new(provider.clone());
        let response = gateway
            .complete(&model(), &CompletionRequest::new("s", "u"), &RetryPolicy::immediate(3))
            .await
            .unwrap();
        assert_eq!(response.text, "ok");
        assert_eq!(provider.recorded_requests().len(), 3);
    }

    #[tokio::test]
    async fn retryable_failure_on_final_attempt_reports_exhaustion() {
        let provider = Arc::new(
            MockProvider::new(MockScript::Sequence(vec![
                ScriptedReply::fail(ScriptedError::RateLimited),
                ScriptedReply::fail(ScriptedError::RateLimited),
            ]))
            .unwrap(),
        );
        let gateway = Gateway::new(provider.clone());
        let err = gateway
            .complete(&model(), &CompletionRequest::new("s", "u"), &RetryPolicy::immediate(2))
            .await
            .unwrap_err();
        match err {
            ProviderError::RetriesExhausted { attempts, last } => {
                assert_eq!(attempts, 2);
                assert_eq!(*last, ProviderError::RateLimited);
            }
            other => panic!("expected RetriesExhausted, got {other:?}"),
        }
    }

    #[tokio::test]
    async fn non_retryable_errors_return_immediately() {
        let provider = Arc::new(
            MockProvider::new(MockScript::Sequence(vec![
                ScriptedReply::fail(ScriptedError::AuthFailure),
                reply("never reached"),
            ]))
            .unwrap(),
        );
        let gateway = Gateway::new(provider.clone());
        let err = gateway
            .complete(&model(), &CompletionRequest::new("s", "u"), &RetryPolicy::immediate(3))
            .await
            .unwrap_err();
        assert!(matches!(err, ProviderError::AuthFailure(_)));
        assert_eq!(provider.recorded_requests().len(), 1);
    }

    #[tokio::test]
    async fn oversized_prompt_fails_preflight_without_any_call() {
        let provider = Arc::new(MockProvider::new(MockScript::Sequence(vec![reply("x")])).unwrap());
        let gateway = Gateway::new(provider.clone());
        let tiny = ModelSpec::new("mock", "m", 4, "gemini-3");
        let request = CompletionRequest::new("a long system prompt", "and a user prompt");
        let err = gateway
            .complete(&tiny, &request, &RetryPolicy::immediate(3))
            .await
            .unwrap_err();
        assert!(matches!(err, ProviderError::ContextOverflow(_)));
        assert!(provider.recorded_requests().is_empty());
    }

    #[test]
    fn backoff_is_non_decreasing() {
        let policy = RetryPolicy::new(
            5,
            Duration::from_millis(100),
            2.0,
            vec![ErrorClass::Timeout],
        )
        .unwrap();
        let delays: Vec<Duration> = (1..5).map(|a| policy.backoff_for(a)).collect();
        assert!(delays.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(delays[0], Duration::from_millis(100));
        assert_eq!(delays[2], Duration::from_millis(400));
    }

    #[test]
    fn policy_rejects_zero_attempts_and_shrinking_backoff() {
        assert!(RetryPolicy::new(0, Duration::ZERO, 1.0, vec![]).is_err());
        assert!(RetryPolicy::new(1, Duration::ZERO, 0.5, vec![]).is_err());
    }

    #[test]
    fn fingerprints_are_stable_and_input_sensitive() {
        let a = request_fingerprint("s", "u", "m");
        assert_eq!(a, request_fingerprint("s", "u", "m"));
        assert_ne!(a, request_fingerprint("s", "u2", "m"));
        assert_ne!(a, request_fingerprint("s2", "u", "m"));
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn usage_combination_tracks_provenance() {
        let reported = Usage::new(10, 5, UsageSource::ProviderReported);
        let estimated = Usage::new(2, 1, UsageSource::Estimated);
        assert_eq!(reported.combined(reported).source, UsageSource::ProviderReported);
        assert_eq!(reported.combined(estimated).source, UsageSource::Estimated);
        assert_eq!(reported.combined(estimated).input_tokens, 12);
    }
}
