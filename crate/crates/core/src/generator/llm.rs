//! Client for chat-completions style HTTP endpoints.

use std::collections::VecDeque;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{Generator, GeneratorBatch, GeneratorRequest, GeneratorUnavailable, Sample};
use crate::prompt::Role;

/// Environment variables consulted for the API key, in order.
pub const API_KEY_VARS: [&str; 2] = ["PREFIXER_API_KEY", "OPENAI_API_KEY"];

#[derive(Debug, Clone)]
pub struct LlmConfig {
    pub base_url: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub request_timeout: Duration,
    pub max_retries: u32,
    pub initial_backoff: Duration,
    /// Ask for all samples in one call via the `n` parameter; otherwise
    /// issue one call per sample.
    pub multi_sample: bool,
    /// Minimum spacing between requests across all callers.
    pub min_interval: Duration,
    pub audit_dir: Option<PathBuf>,
}

impl LlmConfig {
    pub fn new(model: impl Into<String>) -> Self {
        LlmConfig {
            base_url: "https://api.openai.com/v1".into(),
            model: model.into(),
            temperature: 1.0,
            max_tokens: 2048,
            request_timeout: Duration::from_secs(60),
            max_retries: 4,
            initial_backoff: Duration::from_secs(1),
            multi_sample: true,
            min_interval: Duration::ZERO,
            audit_dir: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TransportError {
    pub message: String,
    /// Worth retrying (network failure, 429, 5xx).
    pub retryable: bool,
}

pub trait Transport: Send + Sync {
    fn post(&self, body: &Value) -> Result<Value, TransportError>;
}

pub struct HttpTransport {
    client: reqwest::blocking::Client,
    url: String,
    api_key: String,
}

impl HttpTransport {
    pub fn new(config: &LlmConfig, api_key: String) -> Result<Self, GeneratorUnavailable> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.request_timeout)
            .build()
            .map_err(|e| GeneratorUnavailable(e.to_string()))?;
        Ok(HttpTransport {
            client,
            url: format!("{}/chat/completions", config.base_url.trim_end_matches('/')),
            api_key,
        })
    }

    /// Reads the key from the first set variable of [`API_KEY_VARS`].
    pub fn from_env(config: &LlmConfig) -> Result<Self, GeneratorUnavailable> {
        let key = API_KEY_VARS
            .iter()
            .find_map(|var| std::env::var(var).ok().filter(|v| !v.is_empty()))
            .ok_or_else(|| GeneratorUnavailable(format!("no API key in {}", API_KEY_VARS.join(" or "))))?;
        Self::new(config, key)
    }
}

impl Transport for HttpTransport {
    fn post(&self, body: &Value) -> Result<Value, TransportError> {
        let response = self
            .client
            .post(&self.url)
            .bearer_auth(&self.api_key)
            .json(body)
            .send()
            .map_err(|e| TransportError {
                message: e.to_string(),
                retryable: true,
            })?;
        let status = response.status();
        if !status.is_success() {
            let text = response.text().unwrap_or_default();
            return Err(TransportError {
                message: format!("HTTP {status}: {text}"),
                retryable: status.as_u16() == 429 || status.is_server_error(),
            });
        }
        response.json().map_err(|e| TransportError {
            message: e.to_string(),
            retryable: false,
        })
    }
}

/// Replays queued replies and records every request body.
#[derive(Default)]
pub struct CannedTransport {
    replies: Mutex<VecDeque<Result<Value, TransportError>>>,
    pub requests: Mutex<Vec<Value>>,
}

impl CannedTransport {
    pub fn new() -> Self {
        Self::default()
    }

    /// Queues a completion whose choices carry `contents`.
    pub fn reply(self, contents: &[&str]) -> Self {
        let choices: Vec<Value> = contents
            .iter()
            .map(|c| json!({"message": {"role": "assistant", "content": c}}))
            .collect();
        self.replies.lock().unwrap().push_back(Ok(json!({ "choices": choices })));
        self
    }

    pub fn fail(self, retryable: bool) -> Self {
        self.replies.lock().unwrap().push_back(Err(TransportError {
            message: "canned failure".into(),
            retryable,
        }));
        self
    }

    pub fn request_count(&self) -> usize {
        self.requests.lock().unwrap().len()
    }
}

impl Transport for CannedTransport {
    fn post(&self, body: &Value) -> Result<Value, TransportError> {
        self.requests.lock().unwrap().push(body.clone());
        self.replies.lock().unwrap().pop_front().unwrap_or_else(|| {
            Err(TransportError {
                message: "no canned reply left".into(),
                retryable: false,
            })
        })
    }
}

pub struct LlmGenerator<T: Transport> {
    config: LlmConfig,
    transport: T,
    last_request: Mutex<Option<Instant>>,
    audit_seq: AtomicUsize,
}

impl<T: Transport> LlmGenerator<T> {
    pub fn new(config: LlmConfig, transport: T) -> Self {
        LlmGenerator {
            config,
            transport,
            last_request: Mutex::new(None),
            audit_seq: AtomicUsize::new(0),
        }
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    fn throttle(&self) {
        if self.config.min_interval.is_zero() {
            return;
        }
        let mut last = self.last_request.lock().unwrap();
        if let Some(at) = *last {
            let elapsed = at.elapsed();
            if elapsed < self.config.min_interval {
                thread::sleep(self.config.min_interval - elapsed);
            }
        }
        *last = Some(Instant::now());
    }

    fn body(&self, request: &GeneratorRequest, n: usize) -> Value {
        let messages: Vec<Value> = request
            .conversation
            .messages
            .iter()
            .map(|m| {
                let role = match m.role {
                    Role::System => "system",
                    Role::User => "user",
                    Role::Assistant => "assistant",
                };
                json!({"role": role, "content": m.content})
            })
            .collect();
        json!({
            "model": self.config.model,
            "messages": messages,
            "n": n,
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_tokens,
        })
    }

    fn post_with_retry(&self, body: &Value) -> Result<Value, GeneratorUnavailable> {
        let mut delay = self.config.initial_backoff;
        let mut attempt = 0;
        loop {
            self.throttle();
            match self.transport.post(body) {
                Ok(v) => {
                    self.audit(body, Some(&v), None);
                    return Ok(v);
                }
                Err(e) => {
                    self.audit(body, None, Some(&e.message));
                    if !e.retryable || attempt >= self.config.max_retries {
                        return Err(GeneratorUnavailable(e.message));
                    }
                    log::warn!("generator request failed (attempt {}): {}", attempt + 1, e.message);
                    thread::sleep(delay);
                    delay = delay.saturating_mul(2);
                    attempt += 1;
                }
            }
        }
    }

    fn audit(&self, body: &Value, response: Option<&Value>, error: Option<&str>) {
        let Some(dir) = &self.config.audit_dir else { return };
        let seq = self.audit_seq.fetch_add(1, Ordering::SeqCst);
        let record = json!({"request": body, "response": response, "error": error});
        let path = dir.join(format!("request-{seq:05}.json"));
        if let Err(e) = std::fs::create_dir_all(dir)
            .and_then(|_| std::fs::write(&path, serde_json::to_vec_pretty(&record).unwrap_or_default()))
        {
            log::warn!("audit write to {} failed: {e}", path.display());
        }
    }
}

fn contents(response: &Value) -> Vec<String> {
    response["choices"]
        .as_array()
        .map(|choices| {
            choices
                .iter()
                .filter_map(|c| c["message"]["content"].as_str().map(str::to_string))
                .collect()
        })
        .unwrap_or_default()
}

impl<T: Transport> Generator for LlmGenerator<T> {
    fn generate(&self, request: &GeneratorRequest) -> Result<GeneratorBatch, GeneratorUnavailable> {
        if request.conversation.is_empty() {
            return Err(GeneratorUnavailable("empty conversation".into()));
        }
        let samples = request.samples.max(1);
        let mut raws = Vec::with_capacity(samples);
        if self.config.multi_sample {
            let response = self.post_with_retry(&self.body(request, samples))?;
            raws.extend(contents(&response));
        } else {
            for _ in 0..samples {
                let response = self.post_with_retry(&self.body(request, 1))?;
                raws.extend(contents(&response).into_iter().take(1));
            }
        }
        raws.truncate(samples);
        Ok(GeneratorBatch {
            responses: raws.into_iter().map(Sample::from_raw).collect(),
        })
    }

    fn name(&self) -> &str {
        "llm"
    }
}
