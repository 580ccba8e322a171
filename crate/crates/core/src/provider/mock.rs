//! A deterministic scripted provider for offline runs and tests.

use std::collections::BTreeMap;
use std::sync::Mutex;
use std::time::Duration;

use async_trait::async_trait;
use serde::Deserialize;

use super::{
    estimate_tokens, request_fingerprint, ChatProvider, CompletionRequest, CompletionResponse,
    ModelSpec, ProviderError, Usage, UsageSource,
};

/// What the mock should do for one request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScriptedReply {
    Text {
        text: String,
        /// Reported token counts; when absent, counts are estimated and
        /// tagged accordingly.
        input_tokens: Option<u64>,
        output_tokens: Option<u64>,
    },
    Fail(ScriptedError),
}

impl ScriptedReply {
    pub fn text(text: impl Into<String>) -> Self {
        ScriptedReply::Text {
            text: text.into(),
            input_tokens: None,
            output_tokens: None,
        }
    }

    pub fn text_with_usage(text: impl Into<String>, input_tokens: u64, output_tokens: u64) -> Self {
        ScriptedReply::Text {
            text: text.into(),
            input_tokens: Some(input_tokens),
            output_tokens: Some(output_tokens),
        }
    }

    pub fn fail(error: ScriptedError) -> Self {
        ScriptedReply::Fail(error)
    }
}

/// Failure kinds a script can inject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptedError {
    Timeout,
    RateLimited,
    AuthFailure,
    ServerError,
}

impl ScriptedError {
    fn to_provider_error(self) -> ProviderError {
        match self {
            ScriptedError::Timeout => ProviderError::Timeout,
            ScriptedError::RateLimited => ProviderError::RateLimited,
            ScriptedError::AuthFailure => ProviderError::AuthFailure("scripted".into()),
            ScriptedError::ServerError => ProviderError::ServerError {
                status: 500,
                message: "scripted".into(),
            },
        }
    }
}

/// How replies are selected.
///
/// `Sequence` replays in order and each reply is consumed once. `Match`
/// and `Keyed` are stable functions of the request (a content fingerprint),
/// so identical requests always get identical replies; that property makes
/// concurrent runs deterministic.
#[derive(Debug, Clone, PartialEq)]
pub enum MockScript {
    Sequence(Vec<ScriptedReply>),
    Match {
        /// First entry whose `contains` text appears in the user prompt wins.
        entries: Vec<(String, ScriptedReply)>,
        default: Option<ScriptedReply>,
    },
    Keyed {
        /// Exact request fingerprints (see [`request_fingerprint`]).
        entries: BTreeMap<String, ScriptedReply>,
    },
}

/// One request the mock saw, for assertions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordedRequest {
    pub system_text: String,
    pub user_text: String,
    pub model_name: String,
}

/// Deterministic scripted provider. Script consumption and request
/// recording are serialized behind mutexes, so concurrent calls stay safe.
pub struct MockProvider {
    script: Mutex<ScriptState>,
    requests: Mutex<Vec<RecordedRequest>>,
}

struct ScriptState {
    script: MockScript,
    cursor: usize,
}

impl MockProvider {
    pub fn new(script: MockScript) -> Result<Self, ProviderError> {
        let empty = match &script {
            MockScript::Sequence(replies) => replies.is_empty(),
            MockScript::Match { entries, default } => entries.is_empty() && default.is_none(),
            MockScript::Keyed { entries } => entries.is_empty(),
        };
        if empty {
            return Err(ProviderError::InvalidConfig("mock script is empty".into()));
        }
        Ok(MockProvider {
            script: Mutex::new(ScriptState { script, cursor: 0 }),
            requests: Mutex::new(Vec::new()),
        })
    }

    /// Parse a script from its JSON file form. Three shapes:
    ///
    /// ```json
    /// {"mode": "sequence", "responses": [{"text": "...", "input_tokens": 100, "output_tokens": 10}, {"error": "rate_limited"}]}
    /// {"mode": "match", "entries": [{"contains": "case-1", "text": "..."}], "default": {"text": "..."}}
    /// {"mode": "keyed", "responses": {"<sha256 fingerprint>": {"text": "..."}}}
    /// ```
    pub fn from_json_str(json: &str) -> Result<Self, ProviderError> {
        let raw: RawScript = serde_json::from_str(json)
            .map_err(|e| ProviderError::InvalidConfig(format!("mock script: {e}")))?;
        Self::new(raw.try_into()?)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, ProviderError> {
        let json = std::fs::read_to_string(path).map_err(|e| {
            ProviderError::InvalidConfig(format!("mock script {}: {e}", path.display()))
        })?;
        Self::from_json_str(&json)
    }

    /// Every request seen so far, in arrival order.
    pub fn recorded_requests(&self) -> Vec<RecordedRequest> {
        self.requests.lock().expect("mock lock").clone()
    }

    fn next_reply(
        &self,
        model: &ModelSpec,
        request: &CompletionRequest,
    ) -> Result<ScriptedReply, ProviderError> {
        let mut state = self.script.lock().expect("mock lock");
        match &state.script {
            MockScript::Sequence(replies) => {
                let reply = replies.get(state.cursor).cloned();
                match reply {
                    Some(reply) => {
                        state.cursor += 1;
                        Ok(reply)
                    }
                    None => Err(ProviderError::ScriptExhausted),
                }
            }
            MockScript::Match { entries, default } => entries
                .iter()
                .find(|(needle, _)| request.user_text.contains(needle))
                .map(|(_, reply)| reply.clone())
                .or_else(|| default.clone())
                .ok_or(ProviderError::ScriptExhausted),
            MockScript::Keyed { entries } => {
                let fingerprint = request_fingerprint(
                    &request.system_text,
                    &request.user_text,
                    &model.model_name,
                );
                entries
                    .get(&fingerprint)
                    .cloned()
                    .ok_or(ProviderError::ScriptExhausted)
            }
        }
    }
}

#[async_trait]
impl ChatProvider for MockProvider {
    async fn complete_once(
        &self,
        model: &ModelSpec,
        request: &CompletionRequest,
    ) -> Result<CompletionResponse, ProviderError> {
        self.requests.lock().expect("mock lock").push(RecordedRequest {
            system_text: request.system_text.clone(),
            user_text: request.user_text.clone(),
            model_name: model.model_name.clone(),
        });
        match self.next_reply(model, request)? {
            ScriptedReply::Fail(error) => Err(error.to_provider_error()),
            ScriptedReply::Text {
                text,
                input_tokens,
                output_tokens,
            } => {
                let reported = input_tokens.is_some() && output_tokens.is_some();
                let usage = Usage::new(
                    input_tokens.unwrap_or_else(|| {
                        estimate_tokens(&request.system_text) + estimate_tokens(&request.user_text)
                    }),
                    output_tokens.unwrap_or_else(|| estimate_tokens(&text)),
                    if reported {
                        UsageSource::ProviderReported
                    } else {
                        UsageSource::Estimated
                    },
                );
                Ok(CompletionResponse {
                    text,
                    usage,
                    latency: Duration::ZERO,
                })
            }
        }
    }

    fn ready(&self) -> Result<(), ProviderError> {
        Ok(())
    }
}

#[derive(Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
enum RawScript {
    Sequence {
        responses: Vec<RawReply>,
    },
    Match {
        entries: Vec<RawMatchEntry>,
        #[serde(default)]
        default: Option<RawReply>,
    },
    Keyed {
        responses: BTreeMap<String, RawReply>,
    },
}

#[derive(Deserialize)]
struct RawReply {
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    error: Option<ScriptedError>,
    #[serde(default)]
    input_tokens: Option<u64>,
    #[serde(default)]
    output_tokens: Option<u64>,
}

#[derive(Deserialize)]
struct RawMatchEntry {
    contains: String,
    #[serde(flatten)]
    reply: RawReply,
}

impl TryFrom<RawReply> for ScriptedReply {
    type Error = ProviderError;

    fn try_from(raw: RawReply) -> Result<Self, ProviderError> {
        match (raw.text, raw.error) {
            (Some(text), None) => Ok(ScriptedReply::Text {
                text,
                input_tokens: raw.input_tokens,
                output_tokens: raw.output_tokens,
            }),
            (None, Some(error)) => Ok(ScriptedReply::Fail(error)),
            _ => Err(ProviderError::InvalidConfig(
                "each mock reply needs exactly one of \"text\" or \"error\"".into(),
            )),
        }
    }
}

impl TryFrom<RawScript> for MockScript {
    type Error = ProviderError;

    fn try_from(raw: RawScript) -> Result<Self, ProviderError> {
        Ok(match raw {
            RawScript::Sequence { responses } => MockScript::Sequence(
                responses
                    .into_iter()
                    .map(ScriptedReply::try_from)
                    .collect::<Result<_, _>>()?,
            ),
            RawScript::Match { entries, default } => MockScript::Match {
                entries: entries
                    .into_iter()
                    .map(|e| Ok((e.contains, ScriptedReply::try_from(e.reply)?)))
                    .collect::<Result<_, ProviderError>>()?,
                default: default.map(ScriptedReply::try_from).transpose()?,
            },
            RawScript::Keyed { responses } => MockScript::Keyed {
                entries: responses
                    .into_iter()
                    .map(|(k, v)| Ok((k, ScriptedReply::try_from(v)?)))
                    .collect::<Result<_, ProviderError>>()?,
            },
        })
    }
}
