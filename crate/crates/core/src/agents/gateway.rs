//! Chat-completions client with tool calling, retry with exponential backoff,
//! transcript logging and transcript replay.

use std::collections::VecDeque;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;
use tracing::warn;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatewayConfig {
    pub endpoint_url: String,
    pub model_name: String,
    pub api_key_env_var_name: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub request_timeout_secs: u64,
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub max_concurrent_requests: usize,
}

pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 30_000;

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            endpoint_url: "https://api.openai.com/v1/chat/completions".into(),
            model_name: "gpt-4o".into(),
            api_key_env_var_name: "TOH_API_KEY".into(),
            temperature: 1.0,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
            request_timeout_secs: 300,
            max_retries: 4,
            initial_backoff_ms: 500,
            max_concurrent_requests: 4,
        }
    }
}

impl GatewayConfig {
    /// Delay before retry number `attempt` (0-based), doubling each time and
    /// capped at one minute.
    pub fn backoff(&self, attempt: u32) -> Duration {
        let ms = self
            .initial_backoff_ms
            .saturating_mul(1u64 << attempt.min(20))
            .min(60_000);
        Duration::from_millis(ms)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("auth: {0}")]
    Auth(String),
    #[error("timeout: {0}")]
    Timeout(String),
    #[error("transport: {0}")]
    Transport(String),
    #[error("http {status}: {body}")]
    Http { status: u16, body: String },
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("auth: environment variable {0} is not set")]
    MissingKey(String),
    #[error("transcript: {0}")]
    Transcript(String),
}

impl GatewayError {
    pub fn category(&self) -> &'static str {
        match self {
            GatewayError::Auth(_) | GatewayError::MissingKey(_) => "auth",
            GatewayError::Timeout(_) => "timeout",
            GatewayError::Transport(_) => "transport",
            GatewayError::Http { .. } => "http",
            GatewayError::Protocol(_) => "protocol",
            GatewayError::Transcript(_) => "transcript",
        }
    }

    fn is_transient(&self) -> bool {
        match self {
            GatewayError::Timeout(_) | GatewayError::Transport(_) => true,
            GatewayError::Http { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

/// Raw HTTP exchange result as seen by the client.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportFailure {
    Timeout,
    Connect,
    /// Replay source has no more recorded replies.
    Exhausted,
}

pub trait Transport: Send {
    fn send(&mut self, body: &Value) -> Result<HttpReply, (TransportFailure, String)>;

    /// Whether retries should actually sleep.
    fn wants_backoff(&self) -> bool {
        true
    }
}

/// Counting semaphore bounding outstanding requests across clients.
#[derive(Debug)]
pub struct RequestLimiter {
    slots: Mutex<usize>,
    freed: Condvar,
}

impl RequestLimiter {
    pub fn new(limit: usize) -> Arc<Self> {
        Arc::new(Self {
            slots: Mutex::new(limit.max(1)),
            freed: Condvar::new(),
        })
    }

    fn acquire(self: &Arc<Self>) -> LimiterGuard {
        let mut slots = self.slots.lock().expect("limiter lock");
        while *slots == 0 {
            slots = self.freed.wait(slots).expect("limiter lock");
        }
        *slots -= 1;
        LimiterGuard(Arc::clone(self))
    }
}

struct LimiterGuard(Arc<RequestLimiter>);

impl Drop for LimiterGuard {
    fn drop(&mut self) {
        *self.0.slots.lock().expect("limiter lock") += 1;
        self.0.freed.notify_one();
    }
}

pub struct HttpTransport {
    agent: ureq::Agent,
    url: String,
    api_key: String,
    limiter: Arc<RequestLimiter>,
}

impl HttpTransport {
    /// Reads the API key from the configured environment variable.
    pub fn new(cfg: &GatewayConfig, limiter: Arc<RequestLimiter>) -> Result<Self, GatewayError> {
        let api_key = std::env::var(&cfg.api_key_env_var_name)
            .map_err(|_| GatewayError::MissingKey(cfg.api_key_env_var_name.clone()))?;
        Ok(Self::with_key(cfg, api_key, limiter))
    }

    pub fn with_key(cfg: &GatewayConfig, api_key: String, limiter: Arc<RequestLimiter>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(cfg.request_timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            agent,
            url: cfg.endpoint_url.clone(),
            api_key,
            limiter,
        }
    }
}

impl Transport for HttpTransport {
    fn send(&mut self, body: &Value) -> Result<HttpReply, (TransportFailure, String)> {
        let _slot = self.limiter.acquire();
        let result = self
            .agent
            .post(&self.url)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .header("Content-Type", "application/json")
            .send(body.to_string());
        let classify = |e: ureq::Error| match e {
            ureq::Error::Timeout(_) => (TransportFailure::Timeout, e.to_string()),
            other => (TransportFailure::Connect, other.to_string()),
        };
        let mut response = result.map_err(classify)?;
        let status = response.status().as_u16();
        let body = response.body_mut().read_to_string().map_err(classify)?;
        Ok(HttpReply { status, body })
    }
}

/// One line of the append-only transcript log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub seq: u64,
    pub request: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reply: Option<HttpReply>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<(TransportFailure, String)>,
}

pub struct TranscriptLog {
    path: PathBuf,
    file: File,
    seq: u64,
}

impl TranscriptLog {
    pub fn append_to(path: impl Into<PathBuf>) -> Result<Self, GatewayError> {
        let path = path.into();
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| GatewayError::Transcript(format!("{}: {e}", path.display())))?;
        Ok(Self { path, file, seq: 0 })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn record(
        &mut self,
        request: &Value,
        outcome: &Result<HttpReply, (TransportFailure, String)>,
    ) -> Result<(), GatewayError> {
        let entry = TranscriptEntry {
            seq: self.seq,
            request: request.clone(),
            reply: outcome.as_ref().ok().cloned(),
            failure: outcome.as_ref().err().cloned(),
        };
        self.seq += 1;
        let line = serde_json::to_string(&entry).expect("entry serializes");
        writeln!(self.file, "{line}")
            .and_then(|_| self.file.flush())
            .map_err(|e| GatewayError::Transcript(format!("{}: {e}", self.path.display())))
    }
}

/// Serves recorded replies back in order, ignoring the request contents.
pub struct ReplayTransport {
    replies: VecDeque<Result<HttpReply, (TransportFailure, String)>>,
}

impl ReplayTransport {
    pub fn from_replies(replies: impl IntoIterator<Item = HttpReply>) -> Self {
        Self {
            replies: replies.into_iter().map(Ok).collect(),
        }
    }

    pub fn from_entries(entries: impl IntoIterator<Item = TranscriptEntry>) -> Self {
        let replies = entries
            .into_iter()
            .map(|e| match (e.reply, e.failure) {
                (Some(r), _) => Ok(r),
                (None, Some(f)) => Err(f),
                (None, None) => Err((TransportFailure::Connect, "empty transcript entry".into())),
            })
            .collect();
        Self { replies }
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let file = File::open(path)
            .map_err(|e| GatewayError::Transcript(format!("{}: {e}", path.display())))?;
        let mut entries = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line =
                line.map_err(|e| GatewayError::Transcript(format!("{}: {e}", path.display())))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: TranscriptEntry = serde_json::from_str(&line).map_err(|e| {
                GatewayError::Transcript(format!("{} line {}: {e}", path.display(), i + 1))
            })?;
            entries.push(entry);
        }
        Ok(Self::from_entries(entries))
    }

    pub fn remaining(&self) -> usize {
        self.replies.len()
    }
}

impl Transport for ReplayTransport {
    fn send(&mut self, _body: &Value) -> Result<HttpReply, (TransportFailure, String)> {
        self.replies
            .pop_front()
            .unwrap_or_else(|| Err((TransportFailure::Exhausted, "replay exhausted".into())))
    }

    fn wants_backoff(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: "system".into(), content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: "user".into(), content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: "assistant".into(), content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolCall {
    pub id: Option<String>,
    pub name: String,
    /// JSON-encoded arguments exactly as returned by the model.
    pub arguments: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl std::ops::AddAssign for TokenUsage {
    fn add_assign(&mut self, rhs: Self) {
        self.prompt_tokens += rhs.prompt_tokens;
        self.completion_tokens += rhs.completion_tokens;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelReply {
    pub content: Option<String>,
    pub tool_calls: Vec<ToolCall>,
    pub usage: TokenUsage,
}

/// Decodes a chat-completions response body.
pub fn parse_reply(body: &str) -> Result<ModelReply, GatewayError> {
    let v: Value = serde_json::from_str(body)
        .map_err(|e| GatewayError::Protocol(format!("response is not JSON: {e}")))?;
    let message = v
        .pointer("/choices/0/message")
        .ok_or_else(|| GatewayError::Protocol("response has no choices[0].message".into()))?;
    let content = message
        .get("content")
        .and_then(Value::as_str)
        .filter(|s| !s.is_empty())
        .map(str::to_owned);
    let mut tool_calls = Vec::new();
    if let Some(calls) = message.get("tool_calls").and_then(Value::as_array) {
        for call in calls {
            let function = call
                .get("function")
                .ok_or_else(|| GatewayError::Protocol("tool call without function".into()))?;
            let name = function
                .get("name")
                .and_then(Value::as_str)
                .ok_or_else(|| GatewayError::Protocol("tool call without name".into()))?;
            let arguments = match function.get("arguments") {
                Some(Value::String(s)) => s.clone(),
                Some(other) => other.to_string(),
                None => "{}".into(),
            };
            tool_calls.push(ToolCall {
                id: call.get("id").and_then(Value::as_str).map(str::to_owned),
                name: name.to_owned(),
                arguments,
            });
        }
    }
    let usage = TokenUsage {
        prompt_tokens: v.pointer("/usage/prompt_tokens").and_then(Value::as_u64).unwrap_or(0),
        completion_tokens: v
            .pointer("/usage/completion_tokens")
            .and_then(Value::as_u64)
            .unwrap_or(0),
    };
    Ok(ModelReply { content, tool_calls, usage })
}

pub struct GatewayClient {
    cfg: GatewayConfig,
    transport: Box<dyn Transport>,
    transcript: Option<TranscriptLog>,
}

impl GatewayClient {
    pub fn new(cfg: GatewayConfig, transport: Box<dyn Transport>) -> Self {
        Self { cfg, transport, transcript: None }
    }

    pub fn with_transcript(mut self, log: TranscriptLog) -> Self {
        self.transcript = Some(log);
        self
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.cfg
    }

    pub fn request_body(&self, messages: &[ChatMessage], tools: Option<&Value>) -> Value {
        let mut body = json!({
            "model": self.cfg.model_name,
            "messages": messages,
            "temperature": self.cfg.temperature,
            "max_tokens": self.cfg.max_output_tokens,
        });
        if let Some(tools) = tools {
            body["tools"] = tools.clone();
            body["tool_choice"] = json!("auto");
        }
        body
    }

    /// Sends one chat request, retrying transient failures.
    pub fn call(
        &mut self,
        messages: &[ChatMessage],
        tools: Option<&Value>,
    ) -> Result<ModelReply, GatewayError> {
        let body = self.request_body(messages, tools);
        let mut attempt = 0;
        loop {
            let outcome = self.transport.send(&body);
            if let Some(log) = &mut self.transcript {
                log.record(&body, &outcome)?;
            }
            let result = match outcome {
                Ok(HttpReply { status: 200..=299, body }) => parse_reply(&body),
                Ok(HttpReply { status: 401 | 403, body }) => Err(GatewayError::Auth(body)),
                Ok(HttpReply { status, body }) => Err(GatewayError::Http { status, body }),
                Err((TransportFailure::Timeout, msg)) => Err(GatewayError::Timeout(msg)),
                Err((TransportFailure::Connect, msg)) => Err(GatewayError::Transport(msg)),
                Err((TransportFailure::Exhausted, msg)) => Err(GatewayError::Transcript(msg)),
            };
            match result {
                Err(e) if e.is_transient() && attempt < self.cfg.max_retries => {
                    let delay = self.cfg.backoff(attempt);
                    warn!(attempt, ?delay, error = %e, "retrying model request");
                    if self.transport.wants_backoff() {
                        std::thread::sleep(delay);
                    }
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

/// Free-function form of [`GatewayClient::call`].
pub fn gateway_call(
    client: &mut GatewayClient,
    messages: &[ChatMessage],
    tool_schema: Option<&Value>,
) -> Result<ModelReply, GatewayError> {
    client.call(messages, tool_schema)
}

/// Builds a chat-completions response body; used by fixtures and stubs.
pub fn reply_body(content: Option<&str>, tool_call: Option<(&str, Value)>) -> String {
    let mut message = json!({"role": "assistant", "content": content});
    if let Some((name, args)) = tool_call {
        message["tool_calls"] = json!([{
            "id": "call_0",
            "type": "function",
            "function": {"name": name, "arguments": args.to_string()}
        }]);
    }
    json!({
        "choices": [{"index": 0, "message": message, "finish_reason": "stop"}],
        "usage": {"prompt_tokens": 100, "completion_tokens": 10}
    })
    .to_string()
}
