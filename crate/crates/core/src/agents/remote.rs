//! Chat-completion backend over HTTP (OpenAI-compatible message schema).

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{AgentBackend, BackendError, BackendIdentity, Request, Role};

pub const DEFAULT_API_KEY_ENV: &str = "DISCO_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the API key.
    pub api_key_env: String,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    /// Retries after the first attempt for timeouts, 429 and 5xx replies.
    pub max_retries: u32,
    pub timeout_secs: f64,
    pub max_in_flight: usize,
    pub backoff_initial_ms: u64,
    pub backoff_max_ms: u64,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4o".into(),
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            temperature: 0.0,
            max_tokens: None,
            max_retries: 3,
            timeout_secs: 120.0,
            max_in_flight: 4,
            backoff_initial_ms: 500,
            backoff_max_ms: 8000,
        }
    }
}

impl RemoteConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.endpoint.trim().is_empty() {
            return Err("remote endpoint must be set".into());
        }
        if self.model.trim().is_empty() {
            return Err("remote model must be set".into());
        }
        if self.api_key_env.trim().is_empty() {
            return Err("remote api_key_env must name an environment variable".into());
        }
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err("remote timeout_secs must be positive".into());
        }
        if self.max_in_flight == 0 {
            return Err("remote max_in_flight must be at least 1".into());
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err("remote temperature must be non-negative".into());
        }
        Ok(())
    }

    /// Delay before retry number `attempt` (1-based).
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u64.checked_shl(attempt.saturating_sub(1)).unwrap_or(u64::MAX);
        Duration::from_millis(self.backoff_initial_ms.saturating_mul(factor).min(self.backoff_max_ms))
    }
}

/// Counting semaphore capping concurrent requests.
#[derive(Debug)]
struct Gate {
    in_flight: Mutex<usize>,
    freed: Condvar,
    cap: usize,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn new(cap: usize) -> Self {
        Self {
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
            cap: cap.max(1),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.cap {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.0.freed.notify_one();
    }
}

pub struct RemoteBackend {
    config: RemoteConfig,
    api_key: String,
    client: reqwest::blocking::Client,
    gate: Gate,
}

impl std::fmt::Debug for RemoteBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteBackend")
            .field("config", &self.config)
            .field("api_key", &"<redacted>")
            .finish()
    }
}

impl RemoteBackend {
    /// Reads the API key from the configured environment variable.
    pub fn from_env(config: RemoteConfig) -> Result<Self, BackendError> {
        let key = std::env::var(&config.api_key_env).map_err(|_| {
            BackendError::Config(format!("environment variable {} is not set", config.api_key_env))
        })?;
        Self::with_api_key(config, key)
    }

    pub fn with_api_key(config: RemoteConfig, api_key: impl Into<String>) -> Result<Self, BackendError> {
        config.validate().map_err(BackendError::Config)?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(Self {
            gate: Gate::new(config.max_in_flight),
            config,
            api_key: api_key.into(),
            client,
        })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    /// Request body in the chat-completions schema.
    pub fn request_body(&self, request: &Request) -> Value {
        let messages: Vec<Value> = request
            .messages
            .iter()
            .map(|m| {
                let role = match m.role {
                    Role::System => "system",
                    Role::User => "user",
                    Role::Assistant => "assistant",
                };
                match &m.image_png_base64 {
                    None => json!({"role": role, "content": m.text}),
                    Some(b64) => json!({
                        "role": role,
                        "content": [
                            {"type": "text", "text": m.text},
                            {"type": "image_url", "image_url": {"url": format!("data:image/png;base64,{b64}")}},
                        ],
                    }),
                }
            })
            .collect();
        let mut body = json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": messages,
        });
        if let Some(n) = self.config.max_tokens {
            body["max_tokens"] = json!(n);
        }
        body
    }

    fn redact(&self, s: &str) -> String {
        if self.api_key.is_empty() {
            s.to_string()
        } else {
            s.replace(&self.api_key, "<redacted>")
        }
    }

    fn send_once(&self, body: &Value) -> Result<String, (bool, BackendError)> {
        let resp = self
            .client
            .post(&self.config.endpoint)
            .bearer_auth(&self.api_key)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body.to_string())
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    (true, BackendError::Timeout)
                } else {
                    (e.is_connect() || e.is_request(), BackendError::Transport(self.redact(&e.to_string())))
                }
            })?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| (true, BackendError::Transport(self.redact(&e.to_string()))))?;
        if !status.is_success() {
            let retry = status.as_u16() == 429 || status.is_server_error();
            return Err((
                retry,
                BackendError::Status {
                    status: status.as_u16(),
                    body: self.redact(&text.chars().take(500).collect::<String>()),
                },
            ));
        }
        extract_content(&text).map_err(|e| (false, e))
    }
}

/// Reply text from a chat-completions response body.
pub fn extract_content(body: &str) -> Result<String, BackendError> {
    let v: Value = serde_json::from_str(body)
        .map_err(|e| BackendError::BadResponse(format!("response is not JSON: {e}")))?;
    let content = &v["choices"][0]["message"]["content"];
    match content {
        Value::String(s) => Ok(s.clone()),
        Value::Array(parts) => {
            let text: Vec<&str> = parts
                .iter()
                .filter_map(|p| p.get("text").and_then(Value::as_str))
                .collect();
            if text.is_empty() {
                Err(BackendError::BadResponse("response content has no text parts".into()))
            } else {
                Ok(text.join(""))
            }
        }
        _ => Err(BackendError::BadResponse(
            "response has no choices[0].message.content".into(),
        )),
    }
}

impl AgentBackend for RemoteBackend {
    fn complete(&self, request: &Request) -> Result<String, BackendError> {
        let body = self.request_body(request);
        let _permit = self.gate.acquire();
        let mut attempt = 0;
        loop {
            match self.send_once(&body) {
                Ok(text) => return Ok(text),
                Err((retry, err)) => {
                    if !retry || attempt >= self.config.max_retries {
                        return Err(err);
                    }
                    attempt += 1;
                    std::thread::sleep(self.config.backoff(attempt));
                }
            }
        }
    }

    fn identity(&self) -> BackendIdentity {
        BackendIdentity {
            kind: "remote".into(),
            model: self.config.model.clone(),
            endpoint: Some(self.config.endpoint.clone()),
        }
    }
}
