use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, CallContext, GenRequest, GenResponse};

/// A scripted reply. With `completion_tokens` set the count is treated as
/// backend-reported usage; otherwise the whitespace proxy is used.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockReply {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion_tokens: Option<u64>,
}

impl MockReply {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            completion_tokens: None,
        }
    }

    pub fn with_tokens(text: impl Into<String>, tokens: u64) -> Self {
        Self {
            text: text.into(),
            completion_tokens: Some(tokens),
        }
    }

    fn to_response(&self) -> GenResponse {
        match self.completion_tokens {
            Some(tokens) => GenResponse {
                text: self.text.clone(),
                completion_tokens: tokens,
                backend_reported: true,
            },
            None => GenResponse::unreported(self.text.clone()),
        }
    }
}

/// Matches when every present condition holds. `contains` is tested against
/// the last message of the request.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rep: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ordinal: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub reply: MockReply,
}

impl MockRule {
    pub fn always(reply: MockReply) -> Self {
        Self {
            reply,
            ..Self::default()
        }
    }

    fn matches(&self, request: &GenRequest, ctx: &CallContext, hash: &str) -> bool {
        self.instance.as_ref().is_none_or(|i| *i == ctx.instance_id)
            && self.rep.is_none_or(|r| r == ctx.rep)
            && self.ordinal.is_none_or(|o| o == ctx.ordinal)
            && self.request_hash.as_ref().is_none_or(|h| h == hash)
            && self.seed.is_none_or(|s| Some(s) == request.seed)
            && self.contains.as_ref().is_none_or(|needle| {
                request
                    .messages
                    .messages
                    .last()
                    .is_some_and(|m| m.content.contains(needle.as_str()))
            })
    }
}

/// First matching rule wins; `default` answers when nothing matches.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub rules: Vec<MockRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<MockReply>,
}

impl MockScript {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, BackendError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Script(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| BackendError::Script(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub ctx: CallContext,
    pub request_hash: String,
    pub request: GenRequest,
    pub response: GenResponse,
}

/// Deterministic scripted backend that records every call.
#[derive(Debug, Default)]
pub struct MockBackend {
    script: MockScript,
    transcript: Mutex<Vec<TranscriptEntry>>,
}

impl MockBackend {
    pub fn new(script: MockScript) -> Self {
        Self {
            script,
            transcript: Mutex::new(Vec::new()),
        }
    }

    /// Every request gets the same reply.
    pub fn constant(reply: MockReply) -> Self {
        Self::new(MockScript {
            rules: Vec::new(),
            default: Some(reply),
        })
    }

    /// Calls in (instance, rep, ordinal) order.
    pub fn transcript(&self) -> Vec<TranscriptEntry> {
        let mut t = self.transcript.lock().expect("transcript lock").clone();
        t.sort_by(|a, b| {
            (&a.ctx.instance_id, a.ctx.rep, a.ctx.ordinal)
                .cmp(&(&b.ctx.instance_id, b.ctx.rep, b.ctx.ordinal))
        });
        t
    }

    pub fn call_count(&self) -> usize {
        self.transcript.lock().expect("transcript lock").len()
    }
}

impl Backend for MockBackend {
    fn generate(&self, request: &GenRequest, ctx: &CallContext) -> Result<GenResponse, BackendError> {
        request.validate()?;
        let hash = request.messages_hash();
        let reply = self
            .script
            .rules
            .iter()
            .find(|r| r.matches(request, ctx, &hash))
            .map(|r| &r.reply)
            .or(self.script.default.as_ref())
            .ok_or_else(|| {
                BackendError::Script(format!(
                    "no rule for instance {} rep {} call {} (hash {hash})",
                    ctx.instance_id, ctx.rep, ctx.ordinal
                ))
            })?;
        let response = reply.to_response();
        self.transcript
            .lock()
            .expect("transcript lock")
            .push(TranscriptEntry {
                ctx: ctx.clone(),
                request_hash: hash,
                request: request.clone(),
                response: response.clone(),
            });
        Ok(response)
    }

    fn honors_seed(&self) -> bool {
        true
    }
}
