//! Client for a remote chat-completion-style endpoint.
//!
//! Wire contract (JSON over HTTP POST):
//!
//! ```text
//! request:  {"model": str?, "messages": [{"role": str, "content": str}],
//!            "temperature": f64, "seed": u64?, "image_refs": [str]}
//! response: {"text": str, "logprob": f64?, "kl": f64?}
//! ```
//!
//! The bearer token, if any, is read from the environment variable named in
//! [`RemoteConfig::api_key_env`] (default `ARENA_API_KEY`).

use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Action, InFlightLimit, Policy, PolicyError, PolicyRequest, PolicyResponse};
use crate::answer::{parse_boxed, ParsedAction};
use crate::dataset::to_json;

pub const DEFAULT_API_KEY_ENV: &str = "ARENA_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteConfig {
    pub url: String,
    pub model: Option<String>,
    pub api_key_env: String,
    pub temperature: f64,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
    pub max_in_flight: usize,
    /// Append the symbolic scene (JSON) to the prompt for text-only models.
    pub attach_scene: bool,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            url: "http://127.0.0.1:8000/v1/arena".to_string(),
            model: None,
            api_key_env: DEFAULT_API_KEY_ENV.to_string(),
            temperature: 0.7,
            timeout_ms: 60_000,
            max_retries: 3,
            initial_backoff_ms: 500,
            max_backoff_ms: 8_000,
            max_in_flight: 8,
            attach_scene: true,
        }
    }
}

impl RemoteConfig {
    /// Delay before retry number `retry` (0-based): doubling, capped.
    pub fn backoff(&self, retry: u32) -> Duration {
        let factor = 1u64.checked_shl(retry).unwrap_or(u64::MAX);
        Duration::from_millis(
            self.initial_backoff_ms
                .saturating_mul(factor)
                .min(self.max_backoff_ms),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub image_refs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    #[serde(default)]
    pub logprob: Option<f64>,
    #[serde(default)]
    pub kl: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TransportError {
    Timeout,
    Connect(String),
    Status { code: u16, body: String },
    Decode(String),
}

impl TransportError {
    fn retryable(&self) -> bool {
        match self {
            TransportError::Timeout | TransportError::Connect(_) => true,
            TransportError::Status { code, .. } => *code == 429 || *code >= 500,
            TransportError::Decode(_) => false,
        }
    }
}

pub trait Transport: Send + Sync {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError>;
}

/// Blocking HTTP transport.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
    url: String,
    api_key: Option<String>,
}

impl HttpTransport {
    pub fn new(config: &RemoteConfig) -> Result<Self, PolicyError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .pool_max_idle_per_host(config.max_in_flight)
            .build()
            .map_err(|e| PolicyError::Other(format!("cannot build HTTP client: {e}")))?;
        Ok(HttpTransport {
            client,
            url: config.url.clone(),
            api_key: std::env::var(&config.api_key_env)
                .ok()
                .filter(|k| !k.is_empty()),
        })
    }
}

impl Transport for HttpTransport {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError> {
        let mut builder = self.client.post(&self.url).json(request);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder.send().map_err(|e| {
            if e.is_timeout() {
                TransportError::Timeout
            } else {
                TransportError::Connect(e.to_string())
            }
        })?;
        let status = response.status();
        let body = response.text().map_err(|e| {
            if e.is_timeout() {
                TransportError::Timeout
            } else {
                TransportError::Connect(e.to_string())
            }
        })?;
        if !status.is_success() {
            return Err(TransportError::Status {
                code: status.as_u16(),
                body,
            });
        }
        serde_json::from_str(&body).map_err(|e| TransportError::Decode(e.to_string()))
    }
}

type StubFn = dyn Fn(&ChatRequest, usize) -> Result<ChatResponse, TransportError> + Send + Sync;

/// In-process transport for tests: answers through a closure that also gets
/// the 0-based call index, and records every request body.
pub struct StubTransport {
    reply: Box<StubFn>,
    recorded: Mutex<Vec<ChatRequest>>,
}

impl StubTransport {
    pub fn new(
        reply: impl Fn(&ChatRequest, usize) -> Result<ChatResponse, TransportError>
            + Send
            + Sync
            + 'static,
    ) -> Self {
        StubTransport {
            reply: Box::new(reply),
            recorded: Mutex::new(Vec::new()),
        }
    }

    /// Always answer with the same text.
    pub fn echo(text: &str) -> Self {
        let text = text.to_string();
        Self::new(move |_, _| {
            Ok(ChatResponse {
                text: text.clone(),
                logprob: None,
                kl: None,
            })
        })
    }

    pub fn requests(&self) -> Vec<ChatRequest> {
        self.recorded
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .clone()
    }
}

impl Transport for StubTransport {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError> {
        let index = {
            let mut rec = self.recorded.lock().unwrap_or_else(|e| e.into_inner());
            rec.push(request.clone());
            rec.len() - 1
        };
        (self.reply)(request, index)
    }
}

pub struct RemotePolicy<T: Transport = HttpTransport> {
    name: String,
    config: RemoteConfig,
    transport: T,
    limit: InFlightLimit,
}

impl RemotePolicy<HttpTransport> {
    pub fn http(config: RemoteConfig) -> Result<Self, PolicyError> {
        let transport = HttpTransport::new(&config)?;
        Ok(RemotePolicy::with_transport(config, transport))
    }
}

impl<T: Transport> RemotePolicy<T> {
    pub fn with_transport(config: RemoteConfig, transport: T) -> Self {
        RemotePolicy {
            name: format!("remote:{}", config.model.as_deref().unwrap_or(&config.url)),
            limit: InFlightLimit::new(config.max_in_flight),
            config,
            transport,
        }
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    /// The request body sent for a policy request.
    pub fn chat_request(&self, req: &PolicyRequest) -> ChatRequest {
        let mut content = req.prompt.clone();
        if self.config.attach_scene {
            content.push_str("\n\nYour picture, as a scene description:\n");
            content.push_str(&to_json(&req.scene));
        }
        ChatRequest {
            model: self.config.model.clone(),
            messages: vec![ChatMessage {
                role: "user".to_string(),
                content,
            }],
            temperature: self.config.temperature,
            seed: Some(req.seed),
            image_refs: vec![req.scene_ref.clone()],
        }
    }

    fn send_with_retry(&self, body: &ChatRequest) -> Result<ChatResponse, PolicyError> {
        let _permit = self.limit.acquire();
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            match self.transport.send(body) {
                Ok(resp) => return Ok(resp),
                Err(err) if err.retryable() && attempt <= self.config.max_retries => {
                    std::thread::sleep(self.config.backoff(attempt - 1));
                }
                Err(err) => {
                    return Err(match err {
                        TransportError::Timeout => PolicyError::Timeout { attempts: attempt },
                        TransportError::Connect(message) => PolicyError::Transport {
                            attempts: attempt,
                            message,
                        },
                        TransportError::Status { code, body } if code == 429 || code >= 500 => {
                            PolicyError::Transport {
                                attempts: attempt,
                                message: format!("status {code}: {body}"),
                            }
                        }
                        TransportError::Status { code, body } => PolicyError::Rejected {
                            status: code,
                            message: body,
                        },
                        TransportError::Decode(m) => PolicyError::Malformed(m),
                    })
                }
            }
        }
    }
}

fn finite(x: Option<f64>) -> Option<f64> {
    x.filter(|v| v.is_finite())
}

impl<T: Transport> Policy for RemotePolicy<T> {
    fn name(&self) -> &str {
        &self.name
    }

    fn respond(&self, req: &PolicyRequest) -> Result<PolicyResponse, PolicyError> {
        let reply = self.send_with_retry(&self.chat_request(req))?;
        let parsed = parse_boxed(&reply.text, req.stage);
        Ok(PolicyResponse {
            action: parsed.action.map(|a| match a {
                ParsedAction::Clue(s) => Action::Clue(s),
                ParsedAction::Vote(v) => Action::Vote(v),
            }),
            parse_issue: parsed.issue,
            logprob: finite(reply.logprob),
            kl: finite(reply.kl),
            reasoning: parsed.reasoning,
            raw_text: reply.text,
            notes: Vec::new(),
        })
    }
}
