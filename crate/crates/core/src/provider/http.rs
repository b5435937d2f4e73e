use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{Backend, Provider, ProviderError, ProviderRequest, ProviderResponse, RateLimiter, SafetyMode, Usage};

/// Harm categories switched to `BLOCK_NONE` when a Gemini request asks for
/// [`SafetyMode::BlockNone`].
pub const GEMINI_SAFETY_CATEGORIES: [&str; 4] = [
    "HARM_CATEGORY_HARASSMENT",
    "HARM_CATEGORY_HATE_SPEECH",
    "HARM_CATEGORY_SEXUALLY_EXPLICIT",
    "HARM_CATEGORY_DANGEROUS_CONTENT",
];

const ANTHROPIC_VERSION: &str = "2023-06-01";
// The messages API requires max_tokens; used when the request leaves it unset.
const ANTHROPIC_DEFAULT_MAX_TOKENS: u32 = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 3, base_delay: Duration::from_millis(500), max_delay: Duration::from_secs(8) }
    }
}

impl RetryPolicy {
    /// Delay before attempt `attempt + 1`, doubling from `base_delay`.
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = 2u32.saturating_pow(attempt.saturating_sub(1));
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

#[derive(Debug, Clone)]
pub struct HttpSettings {
    pub backend: Backend,
    /// Base URL; the backend's public endpoint when `None`.
    pub endpoint: Option<String>,
    pub api_key: String,
    pub timeout: Duration,
    pub retry: RetryPolicy,
}

/// Base URLs from the environment follow each vendor's own convention; the
/// Anthropic one usually stops before the version segment.
fn normalize_base_url(backend: Backend, url: &str) -> String {
    let url = url.trim().trim_end_matches('/');
    if backend == Backend::Anthropic && !url.ends_with("/v1") {
        format!("{url}/v1")
    } else {
        url.to_string()
    }
}

impl HttpSettings {
    /// Reads the API key from `key_var` or the backend's default variable.
    pub fn from_env(backend: Backend, key_var: Option<&str>) -> Result<Self, ProviderError> {
        let var = key_var
            .or(backend.credential_var())
            .ok_or_else(|| ProviderError::InvalidRequest(format!("{backend} is not an HTTP backend")))?;
        let api_key = std::env::var(var)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| ProviderError::MissingCredentials { var: var.to_string() })?;
        let endpoint = backend
            .base_url_var()
            .and_then(|v| std::env::var(v).ok())
            .filter(|u| !u.trim().is_empty())
            .map(|u| normalize_base_url(backend, &u));
        Ok(Self { backend, endpoint, api_key, timeout: Duration::from_secs(300), retry: RetryPolicy::default() })
    }

    fn base_url(&self) -> String {
        let default = match self.backend {
            Backend::OpenaiCompatible => "https://api.openai.com/v1",
            Backend::Anthropic => "https://api.anthropic.com/v1",
            Backend::Gemini => "https://generativelanguage.googleapis.com/v1beta",
            Backend::Replay => "",
        };
        self.endpoint.as_deref().unwrap_or(default).trim_end_matches('/').to_string()
    }
}

pub fn openai_body(req: &ProviderRequest) -> Value {
    let mut body = json!({
        "model": req.model,
        "messages": [{"role": "user", "content": req.prompt}],
    });
    if let Some(t) = req.temperature {
        body["temperature"] = json!(t);
    }
    if let Some(m) = req.max_output_tokens {
        body["max_tokens"] = json!(m);
    }
    body
}

pub fn anthropic_body(req: &ProviderRequest) -> Value {
    let mut body = json!({
        "model": req.model,
        "max_tokens": req.max_output_tokens.unwrap_or(ANTHROPIC_DEFAULT_MAX_TOKENS),
        "messages": [{"role": "user", "content": req.prompt}],
    });
    if let Some(t) = req.temperature {
        body["temperature"] = json!(t);
    }
    body
}

pub fn gemini_body(req: &ProviderRequest) -> Value {
    let mut body = json!({
        "contents": [{"role": "user", "parts": [{"text": req.prompt}]}],
    });
    if req.safety_mode == SafetyMode::BlockNone {
        body["safetySettings"] = GEMINI_SAFETY_CATEGORIES
            .iter()
            .map(|c| json!({"category": c, "threshold": "BLOCK_NONE"}))
            .collect();
    }
    let mut generation = serde_json::Map::new();
    if let Some(t) = req.temperature {
        generation.insert("temperature".into(), json!(t));
    }
    if let Some(m) = req.max_output_tokens {
        generation.insert("maxOutputTokens".into(), json!(m));
    }
    if !generation.is_empty() {
        body["generationConfig"] = Value::Object(generation);
    }
    body
}

fn as_u64(v: &Value) -> Option<u64> {
    v.as_u64()
}

/// Pulls the completion text and token usage out of a backend's JSON reply.
pub fn extract_text(backend: Backend, body: &Value) -> Result<(String, Option<Usage>), ProviderError> {
    let missing = || ProviderError::Decode(format!("{backend}: no completion text in response"));
    match backend {
        Backend::OpenaiCompatible => {
            let text = body["choices"][0]["message"]["content"].as_str().ok_or_else(missing)?;
            let usage = body.get("usage").map(|u| Usage {
                input_tokens: as_u64(&u["prompt_tokens"]),
                output_tokens: as_u64(&u["completion_tokens"]),
            });
            Ok((text.to_string(), usage))
        }
        Backend::Anthropic => {
            let blocks = body["content"].as_array().ok_or_else(missing)?;
            let text: String = blocks
                .iter()
                .filter(|b| b["type"] == "text")
                .filter_map(|b| b["text"].as_str())
                .collect();
            if text.is_empty() {
                return Err(missing());
            }
            let usage = body.get("usage").map(|u| Usage {
                input_tokens: as_u64(&u["input_tokens"]),
                output_tokens: as_u64(&u["output_tokens"]),
            });
            Ok((text, usage))
        }
        Backend::Gemini => {
            let parts = body["candidates"][0]["content"]["parts"].as_array().ok_or_else(missing)?;
            let text: String = parts.iter().filter_map(|p| p["text"].as_str()).collect();
            if text.is_empty() {
                return Err(missing());
            }
            let usage = body.get("usageMetadata").map(|u| Usage {
                input_tokens: as_u64(&u["promptTokenCount"]),
                output_tokens: as_u64(&u["candidatesTokenCount"]),
            });
            Ok((text, usage))
        }
        Backend::Replay => Err(ProviderError::InvalidRequest("replay is not an HTTP backend".into())),
    }
}

/// Live HTTP backend with bounded exponential-backoff retries.
pub struct HttpProvider {
    settings: HttpSettings,
    agent: ureq::Agent,
    limiter: Arc<RateLimiter>,
}

impl HttpProvider {
    pub fn new(settings: HttpSettings, limiter: Arc<RateLimiter>) -> Result<Self, ProviderError> {
        if !settings.backend.is_live() {
            return Err(ProviderError::InvalidRequest("replay is not an HTTP backend".into()));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(settings.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self { settings, agent, limiter })
    }

    fn send_once(&self, req: &ProviderRequest) -> Result<(String, Option<Usage>), ProviderError> {
        let base = self.settings.base_url();
        let key = &self.settings.api_key;
        let (url, body) = match self.settings.backend {
            Backend::OpenaiCompatible => (format!("{base}/chat/completions"), openai_body(req)),
            Backend::Anthropic => (format!("{base}/messages"), anthropic_body(req)),
            Backend::Gemini => (format!("{base}/models/{}:generateContent", req.model), gemini_body(req)),
            Backend::Replay => unreachable!("checked in HttpProvider::new"),
        };
        let request = self.agent.post(&url).header("content-type", "application/json");
        let request = match self.settings.backend {
            Backend::OpenaiCompatible => request.header("authorization", &format!("Bearer {key}")),
            Backend::Anthropic => request.header("x-api-key", key).header("anthropic-version", ANTHROPIC_VERSION),
            Backend::Gemini => request.header("x-goog-api-key", key),
            Backend::Replay => unreachable!(),
        };

        let mut response = request.send_json(&body).map_err(map_transport)?;
        let status = response.status().as_u16();
        let text = response.body_mut().read_to_string().map_err(map_transport)?;
        if status == 401 || status == 403 || (status == 400 && text.contains("API_KEY_INVALID")) {
            return Err(ProviderError::Auth { backend: self.settings.backend, status, message: truncate(&text) });
        }
        if !(200..300).contains(&status) {
            return Err(ProviderError::Http { status, body: truncate(&text) });
        }
        let json: Value = serde_json::from_str(&text).map_err(|e| ProviderError::Decode(e.to_string()))?;
        extract_text(self.settings.backend, &json)
    }
}

fn truncate(s: &str) -> String {
    s.chars().take(500).collect()
}

fn map_transport(err: ureq::Error) -> ProviderError {
    match err {
        ureq::Error::Timeout(_) => ProviderError::Timeout,
        other => ProviderError::Transport(other.to_string()),
    }
}

impl Provider for HttpProvider {
    fn complete(&self, req: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
        req.validate()?;
        let policy = self.settings.retry;
        let mut attempt = 0;
        loop {
            attempt += 1;
            self.limiter.acquire();
            let started = Instant::now();
            match self.send_once(req) {
                Ok((raw_text, usage)) => {
                    return Ok(ProviderResponse {
                        raw_text,
                        request_hash: req.hash(),
                        latency_ms: started.elapsed().as_millis() as u64,
                        usage,
                    })
                }
                Err(err) if err.is_transient() && attempt < policy.max_attempts => {
                    let delay = policy.backoff(attempt);
                    log::warn!("{}: attempt {attempt} failed ({err}); retrying in {delay:?}", self.settings.backend);
                    thread::sleep(delay);
                }
                Err(ProviderError::Http { status: 429, .. }) => {
                    return Err(ProviderError::RateLimited { attempts: attempt })
                }
                Err(err) => return Err(err),
            }
        }
    }

    fn mode(&self) -> String {
        format!("live:{}", self.settings.backend)
    }
}
