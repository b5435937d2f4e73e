//! One chat-completion contract over several LLM backends.
//!
//! Live backends speak HTTP ([`HttpProvider`]); [`ReplayProvider`] answers
//! from a transcript keyed by [`ProviderRequest::hash`], which makes whole
//! pipeline runs deterministic and offline. [`RecordingProvider`] sits in
//! front of a live backend and appends every exchange to a transcript.

mod http;
mod parse;
mod ratelimit;
mod scripted;
mod transcript;

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use http::{
    anthropic_body, extract_text, gemini_body, openai_body, HttpProvider, HttpSettings, RetryPolicy,
    GEMINI_SAFETY_CATEGORIES,
};
pub use parse::{
    extract_json_object, parse_qa_output, parse_structured, parse_summary_output, ParseError, ParseMode,
    Parsed, ParsedQaOutput, ParsedSummaryOutput, Shape,
};
pub use ratelimit::RateLimiter;
pub use scripted::ScriptedProvider;
pub use transcript::{RecordingProvider, ReplayProvider, TranscriptEntry, TranscriptStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    OpenaiCompatible,
    Anthropic,
    Gemini,
    Replay,
}

impl Backend {
    pub fn as_str(self) -> &'static str {
        match self {
            Backend::OpenaiCompatible => "openai_compatible",
            Backend::Anthropic => "anthropic",
            Backend::Gemini => "gemini",
            Backend::Replay => "replay",
        }
    }

    /// Environment variable holding the API key, if the backend needs one.
    pub fn credential_var(self) -> Option<&'static str> {
        match self {
            Backend::OpenaiCompatible => Some("OPENAI_API_KEY"),
            Backend::Anthropic => Some("ANTHROPIC_API_KEY"),
            Backend::Gemini => Some("GEMINI_API_KEY"),
            Backend::Replay => None,
        }
    }

    /// Environment variable that may override the default base URL.
    pub fn base_url_var(self) -> Option<&'static str> {
        match self {
            Backend::OpenaiCompatible => Some("OPENAI_BASE_URL"),
            Backend::Anthropic => Some("ANTHROPIC_BASE_URL"),
            Backend::Gemini => Some("GEMINI_BASE_URL"),
            Backend::Replay => None,
        }
    }

    pub fn is_live(self) -> bool {
        self != Backend::Replay
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "openai_compatible" | "openai" => Ok(Backend::OpenaiCompatible),
            "anthropic" => Ok(Backend::Anthropic),
            "gemini" => Ok(Backend::Gemini),
            "replay" => Ok(Backend::Replay),
            other => Err(format!("unknown backend {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SafetyMode {
    #[default]
    Default,
    /// Gemini only: every harm category set to `BLOCK_NONE`.
    BlockNone,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderRequest {
    pub backend: Backend,
    pub model: String,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_output_tokens: Option<u32>,
    #[serde(default)]
    pub safety_mode: SafetyMode,
}

#[derive(Serialize)]
struct HashInput<'a> {
    backend: &'a str,
    model: &'a str,
    prompt: &'a str,
    temperature: Option<f64>,
    max_output_tokens: Option<u32>,
    safety_mode: SafetyMode,
}

impl ProviderRequest {
    pub fn new(backend: Backend, model: impl Into<String>, prompt: impl Into<String>) -> Self {
        Self {
            backend,
            model: model.into(),
            prompt: prompt.into(),
            temperature: None,
            max_output_tokens: None,
            safety_mode: SafetyMode::Default,
        }
    }

    /// SHA-256 over a fixed-order JSON serialization of every field, hex encoded.
    pub fn hash(&self) -> String {
        let canonical = HashInput {
            backend: self.backend.as_str(),
            model: &self.model,
            prompt: &self.prompt,
            temperature: self.temperature,
            max_output_tokens: self.max_output_tokens,
            safety_mode: self.safety_mode,
        };
        let bytes = serde_json::to_vec(&canonical).expect("request fields always serialize");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.prompt.trim().is_empty() {
            return Err(ProviderError::InvalidRequest("prompt is empty".into()));
        }
        if self.safety_mode == SafetyMode::BlockNone && self.backend != Backend::Gemini {
            log::debug!("block_none safety mode has no effect on {}", self.backend);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub input_tokens: Option<u64>,
    pub output_tokens: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderResponse {
    pub raw_text: String,
    pub request_hash: String,
    pub latency_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<Usage>,
}

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("{backend}: authentication failed (HTTP {status}): {message}")]
    Auth { backend: Backend, status: u16, message: String },
    #[error("rate limited after {attempts} attempt(s)")]
    RateLimited { attempts: u32 },
    #[error("replay miss: no transcript entry for request hash {hash}")]
    ReplayMiss { hash: String },
    #[error("request timed out")]
    Timeout,
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("missing credentials: set {var}")]
    MissingCredentials { var: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("unexpected response shape: {0}")]
    Decode(String),
    #[error("transcript store {path}: {message}")]
    Store { path: String, message: String },
    #[error("scripted provider exhausted after {calls} call(s)")]
    ScriptExhausted { calls: usize },
}

impl ProviderError {
    /// Whether a retry could plausibly succeed.
    pub fn is_transient(&self) -> bool {
        match self {
            ProviderError::Timeout | ProviderError::Transport(_) | ProviderError::RateLimited { .. } => true,
            ProviderError::Http { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

/// A model endpoint. Implementations must be safe to call from many threads.
pub trait Provider: Send + Sync {
    fn complete(&self, req: &ProviderRequest) -> Result<ProviderResponse, ProviderError>;

    /// Short label written into run manifests.
    fn mode(&self) -> String;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable_and_sensitive() {
        let req = ProviderRequest::new(Backend::Gemini, "gemini-1.5-pro", "Summarize this.");
        // sha256 of the compact JSON
        // {"backend":"gemini","model":"gemini-1.5-pro","prompt":"Summarize this.",
        //  "temperature":null,"max_output_tokens":null,"safety_mode":"default"}
        assert_eq!(req.hash(), "7cbb66058faf06159e772d6ea58b7c03322d288f9c0be5a84253f13be4fa5ea7");
        assert_eq!(req.hash().len(), 64);

        let mut spaced = req.clone();
        spaced.prompt.push(' ');
        assert_ne!(req.hash(), spaced.hash());

        let mut warm = req.clone();
        warm.temperature = Some(0.0);
        assert_ne!(req.hash(), warm.hash());

        let mut other = req.clone();
        other.backend = Backend::Anthropic;
        assert_ne!(req.hash(), other.hash());
    }

    #[test]
    fn empty_prompt_is_invalid() {
        let req = ProviderRequest::new(Backend::Replay, "m", "  ");
        assert!(matches!(req.validate(), Err(ProviderError::InvalidRequest(_))));
    }

    #[test]
    fn transient_classification() {
        assert!(ProviderError::Http { status: 503, body: String::new() }.is_transient());
        assert!(ProviderError::Http { status: 429, body: String::new() }.is_transient());
        assert!(!ProviderError::Http { status: 400, body: String::new() }.is_transient());
        assert!(!ProviderError::Auth { backend: Backend::Anthropic, status: 401, message: String::new() }.is_transient());
    }
}
