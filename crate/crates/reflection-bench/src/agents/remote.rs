//! Remote chat-model client over the chat-completions wire protocol.

use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use crate::error::AgentError;
use crate::session::{ChatMessage, Role};

use super::Agent;

/// Environment variable holding the API key. The key is resolved at client
/// construction and never stored in any serializable structure.
pub const API_KEY_ENV: &str = "REFLECTION_API_KEY";

/// Connection settings for one chat-completions endpoint. Carries only the
/// name of the key's environment variable, never the key itself.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct RemoteEndpoint {
    pub base_url: String,
    pub model: String,
    pub api_key_env: String,
    pub timeout_secs: u64,
    /// Maximum attempts per request (retries = attempts - 1).
    pub retry_budget: u32,
    pub requests_per_minute: f64,
    pub backoff_base_ms: u64,
}

impl RemoteEndpoint {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        RemoteEndpoint {
            base_url: base_url.into(),
            model: model.into(),
            api_key_env: API_KEY_ENV.to_string(),
            timeout_secs: 120,
            retry_budget: 3,
            requests_per_minute: 60.0,
            backoff_base_ms: 500,
        }
    }
}

/// Paces requests to a minimum interval; shared across concurrent sessions.
#[derive(Debug)]
pub struct RateLimiter {
    min_interval: Duration,
    last: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn new(requests_per_minute: f64) -> Self {
        let min_interval = if requests_per_minute > 0.0 {
            Duration::from_secs_f64(60.0 / requests_per_minute)
        } else {
            Duration::ZERO
        };
        RateLimiter { min_interval, last: Mutex::new(None) }
    }

    /// Block until a request slot is available and claim it.
    pub fn acquire(&self) {
        if self.min_interval.is_zero() {
            return;
        }
        let wait = {
            let mut last = self.last.lock().expect("rate limiter poisoned");
            let now = Instant::now();
            let ready_at = match *last {
                Some(prev) => prev + self.min_interval,
                None => now,
            };
            let ready_at = ready_at.max(now);
            *last = Some(ready_at);
            ready_at.saturating_duration_since(now)
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

/// One completed chat round trip.
#[derive(Debug, Clone)]
pub struct ChatReply {
    pub content: String,
    pub transport_retries: u32,
    pub latency: Duration,
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
}

pub struct RemoteAgent {
    endpoint: RemoteEndpoint,
    api_key: String,
    http: reqwest::blocking::Client,
    limiter: Arc<RateLimiter>,
    name: String,
}

impl RemoteAgent {
    /// Build a client, resolving the API key from the endpoint's environment
    /// variable. Pass a shared limiter when several sessions run concurrently
    /// against the same provider.
    pub fn new(endpoint: RemoteEndpoint, limiter: Arc<RateLimiter>) -> Result<Self, AgentError> {
        let api_key = std::env::var(&endpoint.api_key_env)
            .map_err(|_| AgentError::MissingApiKey(endpoint.api_key_env.clone()))?;
        Self::with_key(endpoint, api_key, limiter)
    }

    pub fn with_key(
        endpoint: RemoteEndpoint,
        api_key: impl Into<String>,
        limiter: Arc<RateLimiter>,
    ) -> Result<Self, AgentError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(endpoint.timeout_secs))
            .build()
            .map_err(|e| AgentError::Transport { attempts: 0, message: e.to_string() })?;
        let name = format!("remote:{}", endpoint.model);
        Ok(RemoteAgent { endpoint, api_key: api_key.into(), http, limiter, name })
    }

    pub fn endpoint(&self) -> &RemoteEndpoint {
        &self.endpoint
    }

    fn role_str(role: Role) -> &'static str {
        match role {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }

    fn post_once(&self, messages: &[ChatMessage]) -> Result<Value, TransportFailure> {
        self.limiter.acquire();
        let body = json!({
            "model": self.endpoint.model,
            "messages": messages
                .iter()
                .map(|m| json!({ "role": Self::role_str(m.role), "content": m.content }))
                .collect::<Vec<_>>(),
        });
        let url = format!("{}/chat/completions", self.endpoint.base_url.trim_end_matches('/'));
        let response = self
            .http
            .post(url)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| TransportFailure::Retryable(e.to_string()))?;
        let status = response.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(TransportFailure::Retryable(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(TransportFailure::Fatal(format!("HTTP {status}")));
        }
        response
            .json::<Value>()
            .map_err(|e| TransportFailure::Malformed(format!("invalid JSON body: {e}")))
    }

    /// Send the full message history and return the assistant's text, with
    /// exponential backoff (plus jitter) on 429s, 5xx and transport errors.
    pub fn complete_chat(&self, messages: &[ChatMessage]) -> Result<ChatReply, AgentError> {
        use rand::Rng;

        let start = Instant::now();
        let budget = self.endpoint.retry_budget.max(1);
        let mut last_error = String::new();

        for attempt in 1..=budget {
            match self.post_once(messages) {
                Ok(payload) => {
                    let content = payload
                        .get("choices")
                        .and_then(Value::as_array)
                        .and_then(|choices| choices.first())
                        .and_then(|choice| choice.get("message"))
                        .and_then(|message| message.get("content"))
                        .and_then(Value::as_str)
                        .ok_or_else(|| {
                            AgentError::MalformedReply(
                                "missing choices[0].message.content".to_string(),
                            )
                        })?;
                    let usage = payload.get("usage");
                    let token = |key: &str| usage.and_then(|u| u.get(key)).and_then(Value::as_u64);
                    let reply = ChatReply {
                        content: content.to_string(),
                        transport_retries: attempt - 1,
                        latency: start.elapsed(),
                        prompt_tokens: token("prompt_tokens"),
                        completion_tokens: token("completion_tokens"),
                    };
                    log::debug!(
                        "chat completion: model={} latency={:?} retries={} prompt_tokens={:?} completion_tokens={:?}",
                        self.endpoint.model,
                        reply.latency,
                        reply.transport_retries,
                        reply.prompt_tokens,
                        reply.completion_tokens
                    );
                    return Ok(reply);
                }
                Err(TransportFailure::Fatal(message)) => {
                    return Err(AgentError::Transport { attempts: attempt, message });
                }
                Err(TransportFailure::Malformed(message)) => {
                    return Err(AgentError::MalformedReply(message));
                }
                Err(TransportFailure::Retryable(message)) => {
                    log::warn!("attempt {attempt}/{budget} failed: {message}");
                    last_error = message;
                    if attempt < budget {
                        let base = Duration::from_millis(self.endpoint.backoff_base_ms);
                        let backoff = base * 2u32.saturating_pow(attempt - 1);
                        let jitter = base.mul_f64(rand::rng().random::<f64>());
                        std::thread::sleep(backoff + jitter);
                    }
                }
            }
        }
        Err(AgentError::Transport { attempts: budget, message: last_error })
    }
}

enum TransportFailure {
    Retryable(String),
    Fatal(String),
    Malformed(String),
}

impl Agent for RemoteAgent {
    fn name(&self) -> &str {
        &self.name
    }

    fn reply(&mut self, messages: &[ChatMessage]) -> Result<String, AgentError> {
        self.complete_chat(messages).map(|reply| reply.content)
    }
}
