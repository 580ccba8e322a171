//! HTTP chat-completion provider speaking the OpenAI-compatible wire
//! format, which both configured vendors expose.

use std::time::{Duration, Instant};

use async_trait::async_trait;
use serde::Deserialize;

use super::{
    estimate_tokens, ChatProvider, CompletionRequest, CompletionResponse, ModelSpec,
    ProviderError, Usage, UsageSource,
};

/// Env var holding the API key for a provider id: uppercased, with
/// non-alphanumeric characters mapped to `_`, suffixed `_API_KEY`
/// (`google` -> `GOOGLE_API_KEY`). Credentials come from the environment
/// only, never from config files.
pub fn api_key_env_var(provider_id: &str) -> String {
    let mut name: String = provider_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_uppercase()
            } else {
                '_'
            }
        })
        .collect();
    name.push_str("_API_KEY");
    name
}

pub struct HttpProvider {
    provider_id: String,
    base_url: String,
    client: reqwest::Client,
}

impl HttpProvider {
    pub fn new(
        provider_id: impl Into<String>,
        base_url: impl Into<String>,
        request_timeout: Duration,
    ) -> Result<Self, ProviderError> {
        let client = reqwest::Client::builder()
            .timeout(request_timeout)
            .build()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        let base_url = base_url.into();
        Ok(HttpProvider {
            provider_id: provider_id.into(),
            base_url: base_url.trim_end_matches('/').to_string(),
            client,
        })
    }

    fn api_key(&self) -> Result<String, ProviderError> {
        let var = api_key_env_var(&self.provider_id);
        match std::env::var(&var) {
            Ok(key) if !key.trim().is_empty() => Ok(key),
            _ => Err(ProviderError::AuthFailure(format!(
                "environment variable {var} is not set"
            ))),
        }
    }
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    content: String,
}

#[derive(Deserialize)]
struct WireUsage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

#[async_trait]
impl ChatProvider for HttpProvider {
    async fn complete_once(
        &self,
        model: &ModelSpec,
        request: &CompletionRequest,
    ) -> Result<CompletionResponse, ProviderError> {
        let key = self.api_key()?;
        let body = serde_json::json!({
            "model": model.model_name,
            "messages": [
                {"role": "system", "content": request.system_text},
                {"role": "user", "content": request.user_text},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        });

        let started = Instant::now();
        let response = self
            .client
            .post(format!("{}/chat/completions", self.base_url))
            .bearer_auth(key)
            .json(&body)
            .send()
            .await
            .map_err(|e| {
                if e.is_timeout() {
                    ProviderError::Timeout
                } else {
                    ProviderError::Transport(e.to_string())
                }
            })?;
        let latency = started.elapsed();

        let status = response.status();
        let text = response
            .text()
            .await
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        if !status.is_success() {
            let message: String = text.chars().take(500).collect();
            return Err(match status.as_u16() {
                401 | 403 => ProviderError::AuthFailure(message),
                408 => ProviderError::Timeout,
                413 => ProviderError::ContextOverflow(message),
                429 => ProviderError::RateLimited,
                s if s >= 500 => ProviderError::ServerError { status: s, message },
                s => ProviderError::Protocol(format!("status {s}: {message}")),
            });
        }

        let wire: WireResponse = serde_json::from_str(&text)
            .map_err(|e| ProviderError::Protocol(format!("{e}; body starts {:.120}", text)))?;
        let content = wire
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| ProviderError::Protocol("response has no choices".into()))?;
        let usage = match wire.usage {
            Some(u) => Usage::new(u.prompt_tokens, u.completion_tokens, UsageSource::ProviderReported),
            None => Usage::new(
                estimate_tokens(&request.system_text) + estimate_tokens(&request.user_text),
                estimate_tokens(&content),
                UsageSource::Estimated,
            ),
        };
        Ok(CompletionResponse {
            text: content,
            usage,
            latency,
        })
    }

    fn ready(&self) -> Result<(), ProviderError> {
        self.api_key().map(|_| ())
    }
}
