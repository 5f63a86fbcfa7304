//! Chat generation backends.
//!
//! [`Backend`] is implemented by [`OpenAiClient`] (HTTP, OpenAI-compatible
//! chat completions) and [`MockBackend`] (scripted, deterministic).

mod mock;
mod openai;
mod reasoning;

pub use mock::{MockBackend, MockReply, MockRule, MockScript, TranscriptEntry};
pub use openai::{HttpReply, OpenAiClient, RetryPolicy, Transport, TransportError, UreqTransport};
pub use reasoning::{count_tokens_proxy, split_reasoning, ReasoningOutput, THINK_CLOSE, THINK_OPEN};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::prompting::PromptBundle;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("backend unavailable after {attempts} attempts: {last_error}")]
    Unavailable { attempts: u32, last_error: String },
    #[error("malformed response: {message}; body: {body}")]
    Protocol { message: String, body: String },
    #[error("endpoint returned HTTP {status}: {body}")]
    Api { status: u16, body: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("mock script: {0}")]
    Script(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenRequest {
    pub messages: PromptBundle,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub model_name: String,
}

impl GenRequest {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.messages.messages.is_empty() {
            return Err(BackendError::InvalidRequest("no messages".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(BackendError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(BackendError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON encoding of the messages.
    pub fn messages_hash(&self) -> String {
        let canonical =
            serde_json::to_vec(&self.messages).expect("prompt bundles always serialize");
        hex::encode(Sha256::digest(&canonical))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenResponse {
    pub text: String,
    pub completion_tokens: u64,
    /// `true` when the token count came from the backend rather than the
    /// whitespace proxy.
    pub backend_reported: bool,
}

impl GenResponse {
    /// A response whose token count is the whitespace proxy.
    pub fn unreported(text: impl Into<String>) -> Self {
        let text = text.into();
        Self {
            completion_tokens: count_tokens_proxy(&text),
            text,
            backend_reported: false,
        }
    }
}

/// Where a call sits within a run; lets scripted backends key on it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallContext {
    pub instance_id: String,
    pub rep: u32,
    /// 0-based position of this call among the instance's calls.
    pub ordinal: u32,
}

pub trait Backend: Send + Sync {
    fn generate(&self, request: &GenRequest, ctx: &CallContext) -> Result<GenResponse, BackendError>;

    /// Whether request seeds are known to be honored.
    fn honors_seed(&self) -> bool {
        false
    }
}

impl<B: Backend + ?Sized> Backend for &B {
    fn generate(&self, request: &GenRequest, ctx: &CallContext) -> Result<GenResponse, BackendError> {
        (**self).generate(request, ctx)
    }

    fn honors_seed(&self) -> bool {
        (**self).honors_seed()
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn generate(&self, request: &GenRequest, ctx: &CallContext) -> Result<GenResponse, BackendError> {
        (**self).generate(request, ctx)
    }

    fn honors_seed(&self) -> bool {
        (**self).honors_seed()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelProfile {
    pub name: String,
    pub is_reasoning: bool,
    pub default_temperature: f64,
}

impl ModelProfile {
    /// Greedy decoding (0.0) for general models, 0.6 for reasoning models.
    pub fn new(name: impl Into<String>, is_reasoning: bool) -> Self {
        Self {
            name: name.into(),
            is_reasoning,
            default_temperature: if is_reasoning { 0.6 } else { 0.0 },
        }
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.default_temperature = temperature;
        self
    }
}
