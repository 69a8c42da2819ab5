// SPDX-License-Identifier: Apache-2.0

//! Chat-completion access with record/replay.
//!
//! Every request is keyed by the SHA-256 of its canonical JSON form
//! (object keys sorted, compact separators, UTF-8). In record mode live
//! completions are written to `<fixtures>/<hash>`; in replay mode that file
//! is the only source of text and a missing one is a hard error.

mod http;
pub mod scripted;
mod store;

use std::path::PathBuf;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{HttpResponse, Transport, UreqTransport};
pub use store::FixtureStore;

/// Environment variable holding the API key for live requests.
pub const API_KEY_ENV: &str = "DIFFHARNESS_API_KEY";
pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1";
pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;
pub const DEFAULT_ATTEMPTS: u32 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("no fixture for request {0}")]
    FixtureMiss(String),
    #[error("API key not set; export {API_KEY_ENV} for live requests")]
    MissingApiKey,
    #[error("malformed completion response: {0}")]
    BadResponse(String),
    #[error("fixture store: {0}")]
    Store(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PromptRequest {
    pub system: String,
    pub messages: Vec<Message>,
    pub model: String,
}

impl PromptRequest {
    pub fn new(model: &str, system: impl Into<String>, user: impl Into<String>) -> PromptRequest {
        PromptRequest {
            system: system.into(),
            messages: vec![Message {
                role: "user".into(),
                content: user.into(),
            }],
            model: model.to_string(),
        }
    }

    /// Compact JSON with sorted keys; the exact bytes that are hashed.
    pub fn canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("serializable");
        serde_json::to_string(&value).expect("serializable")
    }

    pub fn hash(&self) -> String {
        crate::util::sha256_hex(self.canonical_json().as_bytes())
    }

    pub fn user_text(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == "user")
            .map(|m| m.content.as_str())
            .unwrap_or("")
    }
}

pub trait CompletionProvider: Send + Sync {
    fn complete(&self, request: &PromptRequest) -> Result<String, ProviderError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderMode {
    Live,
    Record,
    Replay,
}

impl std::str::FromStr for ProviderMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "live" => Ok(ProviderMode::Live),
            "record" => Ok(ProviderMode::Record),
            "replay" => Ok(ProviderMode::Replay),
            other => Err(format!("unknown provider mode `{other}` (live, record, replay)")),
        }
    }
}

/// Counting semaphore bounding in-flight requests.
struct Semaphore {
    permits: Mutex<usize>,
    freed: Condvar,
}

impl Semaphore {
    fn new(permits: usize) -> Semaphore {
        Semaphore {
            permits: Mutex::new(permits.max(1)),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut n = self.permits.lock().unwrap();
        while *n == 0 {
            n = self.freed.wait(n).unwrap();
        }
        *n -= 1;
        SemaphoreGuard(self)
    }
}

struct SemaphoreGuard<'a>(&'a Semaphore);

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().unwrap() += 1;
        self.0.freed.notify_one();
    }
}

#[derive(Debug, Clone)]
pub struct ClientConfig {
    pub mode: ProviderMode,
    pub fixtures: PathBuf,
    /// Base URL; `/chat/completions` is appended.
    pub endpoint: String,
    pub api_key: Option<String>,
    pub max_in_flight: usize,
    pub attempts: u32,
    pub backoff: Duration,
}

impl ClientConfig {
    pub fn replay(fixtures: impl Into<PathBuf>) -> ClientConfig {
        ClientConfig {
            mode: ProviderMode::Replay,
            fixtures: fixtures.into(),
            endpoint: DEFAULT_ENDPOINT.to_string(),
            api_key: None,
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
            attempts: DEFAULT_ATTEMPTS,
            backoff: Duration::from_millis(500),
        }
    }
}

pub struct LlmClient {
    config: ClientConfig,
    store: FixtureStore,
    transport: Arc<dyn Transport>,
    gate: Semaphore,
}

impl LlmClient {
    pub fn new(config: ClientConfig, transport: Arc<dyn Transport>) -> LlmClient {
        LlmClient {
            store: FixtureStore::new(&config.fixtures),
            gate: Semaphore::new(config.max_in_flight),
            config,
            transport,
        }
    }

    pub fn mode(&self) -> ProviderMode {
        self.config.mode
    }

    fn chat_url(&self) -> String {
        format!("{}/chat/completions", self.config.endpoint.trim_end_matches('/'))
    }

    fn request_body(request: &PromptRequest) -> String {
        let mut messages = vec![serde_json::json!({"role": "system", "content": request.system})];
        messages.extend(
            request
                .messages
                .iter()
                .map(|m| serde_json::json!({"role": m.role, "content": m.content})),
        );
        serde_json::json!({"model": request.model, "messages": messages}).to_string()
    }

    fn first_choice(body: &str) -> Result<String, ProviderError> {
        let v: serde_json::Value =
            serde_json::from_str(body).map_err(|e| ProviderError::BadResponse(e.to_string()))?;
        v.pointer("/choices/0/message/content")
            .and_then(|c| c.as_str())
            .map(str::to_string)
            .ok_or_else(|| ProviderError::BadResponse("missing choices[0].message.content".into()))
    }

    fn live(&self, request: &PromptRequest) -> Result<String, ProviderError> {
        let _permit = self.gate.acquire();
        let body = Self::request_body(request);
        let url = self.chat_url();
        let mut delay = self.config.backoff;
        let attempts = self.config.attempts.max(1);
        for attempt in 1..=attempts {
            let response = self
                .transport
                .post(&url, self.config.api_key.as_deref(), &body)?;
            let retryable = response.status == 429 || response.status >= 500;
            if (200..300).contains(&response.status) {
                return Self::first_choice(&response.body);
            }
            if !retryable || attempt == attempts {
                return Err(ProviderError::Http {
                    status: response.status,
                    body: response.body,
                });
            }
            log::warn!(
                "completion attempt {attempt} got HTTP {}; retrying in {:?}",
                response.status,
                delay
            );
            std::thread::sleep(delay);
            delay *= 2;
        }
        unreachable!("loop returns on the final attempt")
    }
}

impl CompletionProvider for LlmClient {
    fn complete(&self, request: &PromptRequest) -> Result<String, ProviderError> {
        if request.messages.is_empty() {
            return Err(ProviderError::InvalidRequest("no messages".into()));
        }
        let hash = request.hash();
        match self.config.mode {
            ProviderMode::Replay => self
                .store
                .get(&hash)
                .map_err(|e| ProviderError::Store(e.to_string()))?
                .ok_or(ProviderError::FixtureMiss(hash)),
            ProviderMode::Live => self.live(request),
            ProviderMode::Record => {
                let text = self.live(request)?;
                self.store
                    .put(&hash, &text)
                    .map_err(|e| ProviderError::Store(e.to_string()))?;
                Ok(text)
            }
        }
    }
}
