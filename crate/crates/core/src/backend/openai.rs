use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::Serialize;
use serde_json::Value;

use super::{count_tokens_proxy, Backend, BackendError, CallContext, GenRequest, GenResponse};

/// Raw HTTP reply: status code and body text.
#[derive(Debug, Clone, PartialEq)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

/// A failure before any HTTP status was received (connect, timeout, reset).
#[derive(Debug, Clone, PartialEq)]
pub struct TransportError(pub String);

pub trait Transport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &str,
    ) -> Result<HttpReply, TransportError>;
}

/// Blocking transport on `ureq`; HTTP error statuses are returned, not raised.
pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self { agent }
    }
}

impl Default for UreqTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(600))
    }
}

impl Transport for UreqTransport {
    fn post_json(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &str,
    ) -> Result<HttpReply, TransportError> {
        let mut req = self.agent.post(url).header("Content-Type", "application/json");
        for (k, v) in headers {
            req = req.header(k.as_str(), v.as_str());
        }
        let mut resp = req
            .send(body)
            .map_err(|e| TransportError(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError(e.to_string()))?;
        Ok(HttpReply { status, body })
    }
}

/// Retries after transport failures, HTTP 429 and 5xx, waiting
/// `base_delay · 2^i` before retry `i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, retry: u32) -> Duration {
        self.base_delay * 2u32.saturating_pow(retry)
    }
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

/// Client for `POST <base_url>/v1/chat/completions`.
pub struct OpenAiClient {
    endpoint: String,
    api_key: Option<String>,
    transport: Box<dyn Transport>,
    retry: RetryPolicy,
    sleep: Sleeper,
    honors_seed: bool,
    retries: AtomicU64,
}

impl OpenAiClient {
    pub fn new(base_url: &str, api_key: Option<String>) -> Self {
        Self::with_transport(base_url, api_key, Box::new(UreqTransport::default()))
    }

    pub fn with_transport(base_url: &str, api_key: Option<String>, transport: Box<dyn Transport>) -> Self {
        Self {
            endpoint: format!("{}/v1/chat/completions", base_url.trim_end_matches('/')),
            api_key,
            transport,
            retry: RetryPolicy::default(),
            sleep: Arc::new(std::thread::sleep),
            honors_seed: true,
            retries: AtomicU64::new(0),
        }
    }

    pub fn retry_policy(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn sleeper(mut self, sleep: impl Fn(Duration) + Send + Sync + 'static) -> Self {
        self.sleep = Arc::new(sleep);
        self
    }

    pub fn seed_support(mut self, honors_seed: bool) -> Self {
        self.honors_seed = honors_seed;
        self
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    /// Total retries performed so far by this client.
    pub fn retries(&self) -> u64 {
        self.retries.load(Ordering::Relaxed)
    }

    /// JSON body sent for `request`.
    pub fn request_body(request: &GenRequest) -> String {
        let wire = WireRequest {
            model: &request.model_name,
            messages: request
                .messages
                .messages
                .iter()
                .map(|m| WireMessage {
                    role: match m.role {
                        crate::prompting::Role::System => "system",
                        crate::prompting::Role::User => "user",
                        crate::prompting::Role::Assistant => "assistant",
                    },
                    content: &m.content,
                })
                .collect(),
            temperature: request.temperature,
            max_tokens: request.max_tokens,
            seed: request.seed,
        };
        serde_json::to_string(&wire).expect("wire request serializes")
    }

    /// Extracts `choices[0].message.content` and `usage.completion_tokens`.
    pub fn parse_response(body: &str) -> Result<GenResponse, BackendError> {
        let protocol = |message: &str| BackendError::Protocol {
            message: message.to_string(),
            body: body.to_string(),
        };
        let value: Value = serde_json::from_str(body).map_err(|e| protocol(&e.to_string()))?;
        let text = value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| protocol("missing choices[0].message.content"))?
            .to_string();
        Ok(match value.pointer("/usage/completion_tokens").and_then(Value::as_u64) {
            Some(tokens) => GenResponse {
                text,
                completion_tokens: tokens,
                backend_reported: true,
            },
            None => GenResponse {
                completion_tokens: count_tokens_proxy(&text),
                text,
                backend_reported: false,
            },
        })
    }
}

impl Backend for OpenAiClient {
    fn generate(&self, request: &GenRequest, _ctx: &CallContext) -> Result<GenResponse, BackendError> {
        request.validate()?;
        let body = Self::request_body(request);
        let mut headers = Vec::new();
        if let Some(key) = &self.api_key {
            headers.push(("Authorization".to_string(), format!("Bearer {key}")));
        }
        let mut attempt = 0u32;
        loop {
            let last_error = match self.transport.post_json(&self.endpoint, &headers, &body) {
                Ok(reply) if (200..300).contains(&reply.status) => {
                    return Self::parse_response(&reply.body)
                }
                Ok(reply) if reply.status == 429 || reply.status >= 500 => {
                    format!("HTTP {}: {}", reply.status, reply.body)
                }
                Ok(reply) => {
                    return Err(BackendError::Api {
                        status: reply.status,
                        body: reply.body,
                    })
                }
                Err(TransportError(e)) => e,
            };
            if attempt >= self.retry.max_retries {
                return Err(BackendError::Unavailable {
                    attempts: attempt + 1,
                    last_error,
                });
            }
            let delay = self.retry.delay(attempt);
            attempt += 1;
            self.retries.fetch_add(1, Ordering::Relaxed);
            log::warn!(
                "{}: retry {attempt}/{} in {delay:?} after {last_error}",
                self.endpoint,
                self.retry.max_retries
            );
            (self.sleep)(delay);
        }
    }

    fn honors_seed(&self) -> bool {
        self.honors_seed
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompting::{PromptBundle, Role};
    use std::sync::Mutex;

    // url, headers, body
    type Sent = (String, Vec<(String, String)>, String);

    struct Scripted {
        replies: Mutex<Vec<Result<HttpReply, TransportError>>>,
        seen: Mutex<Vec<Sent>>,
    }

    impl Scripted {
        fn new(mut replies: Vec<Result<HttpReply, TransportError>>) -> Self {
            replies.reverse();
            Self {
                replies: Mutex::new(replies),
                seen: Mutex::new(Vec::new()),
            }
        }
    }

    impl Transport for &'static Scripted {
        fn post_json(
            &self,
            url: &str,
            headers: &[(String, String)],
            body: &str,
        ) -> Result<HttpReply, TransportError> {
            self.seen
                .lock()
                .unwrap()
                .push((url.to_string(), headers.to_vec(), body.to_string()));
            self.replies.lock().unwrap().pop().expect("script exhausted")
        }
    }

    fn ok(body: &str) -> Result<HttpReply, TransportError> {
        Ok(HttpReply {
            status: 200,
            body: body.to_string(),
        })
    }

    fn status(code: u16) -> Result<HttpReply, TransportError> {
        Ok(HttpReply {
            status: code,
            body: r#"{"error":{"message":"nope"}}"#.to_string(),
        })
    }

    fn request() -> GenRequest {
        let mut messages = PromptBundle::user("Which?");
        messages.messages.insert(0, crate::prompting::Message::new(Role::System, "sys"));
        GenRequest {
            messages,
            temperature: 0.6,
            max_tokens: 64,
            seed: Some(7),
            model_name: "r1-8b".into(),
        }
    }

    fn client(script: &'static Scripted) -> OpenAiClient {
        OpenAiClient::with_transport("http://host:8000/", Some("k".into()), Box::new(script))
            .sleeper(|_| {})
    }

    fn ctx() -> CallContext {
        CallContext {
            instance_id: "i".into(),
            rep: 0,
            ordinal: 0,
        }
    }

    const BODY_57: &str = r#"{"choices":[{"message":{"role":"assistant","content":"[1]"}}],"usage":{"completion_tokens":57}}"#;

    #[test]
    fn wire_format() {
        assert_eq!(
            OpenAiClient::request_body(&request()),
            r#"{"model":"r1-8b","messages":[{"role":"system","content":"sys"},{"role":"user","content":"Which?"}],"temperature":0.6,"max_tokens":64,"seed":7}"#
        );
        let mut r = request();
        r.seed = None;
        assert!(!OpenAiClient::request_body(&r).contains("seed"));
    }

    #[test]
    fn reported_usage_is_passed_through() {
        let script: &'static Scripted = Box::leak(Box::new(Scripted::new(vec![ok(BODY_57)])));
        let c = client(script);
        let resp = c.generate(&request(), &ctx()).unwrap();
        assert_eq!(resp.text, "[1]");
        assert_eq!(resp.completion_tokens, 57);
        assert!(resp.backend_reported);
        let seen = script.seen.lock().unwrap();
        assert_eq!(seen[0].0, "http://host:8000/v1/chat/completions");
        assert_eq!(seen[0].1, vec![("Authorization".to_string(), "Bearer k".to_string())]);
    }

    #[test]
    fn missing_usage_falls_back_to_proxy() {
        let resp = OpenAiClient::parse_response(
            r#"{"choices":[{"message":{"content":"two words"}}]}"#,
        )
        .unwrap();
        assert_eq!(resp.completion_tokens, 2);
        assert!(!resp.backend_reported);
    }

    #[test]
    fn retries_server_errors_then_succeeds() {
        let script: &'static Scripted =
            Box::leak(Box::new(Scripted::new(vec![status(500), status(500), ok(BODY_57)])));
        let delays = Arc::new(Mutex::new(Vec::new()));
        let d = delays.clone();
        let c = OpenAiClient::with_transport("http://h", None, Box::new(script))
            .sleeper(move |dur| d.lock().unwrap().push(dur));
        let resp = c.generate(&request(), &ctx()).unwrap();
        assert_eq!(resp.completion_tokens, 57);
        assert_eq!(c.retries(), 2);
        assert_eq!(
            *delays.lock().unwrap(),
            vec![Duration::from_secs(1), Duration::from_secs(2)]
        );
    }

    #[test]
    fn exhaustion_is_unavailable() {
        let script: &'static Scripted = Box::leak(Box::new(Scripted::new(vec![
            Err(TransportError("refused".into())),
            status(503),
            status(502),
            status(500),
        ])));
        let c = client(script);
        match c.generate(&request(), &ctx()) {
            Err(BackendError::Unavailable { attempts, .. }) => assert_eq!(attempts, 4),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(c.retries(), 3);
    }

    #[test]
    fn client_errors_are_not_retried() {
        let script: &'static Scripted = Box::leak(Box::new(Scripted::new(vec![status(400)])));
        let c = client(script);
        assert!(matches!(
            c.generate(&request(), &ctx()),
            Err(BackendError::Api { status: 400, .. })
        ));
        assert_eq!(c.retries(), 0);
    }

    #[test]
    fn malformed_body_is_protocol_error() {
        let script: &'static Scripted = Box::leak(Box::new(Scripted::new(vec![ok(r#"{"choices":[]}"#)])));
        match client(script).generate(&request(), &ctx()) {
            Err(BackendError::Protocol { body, .. }) => assert_eq!(body, r#"{"choices":[]}"#),
            other => panic!("unexpected {other:?}"),
        }
    }
}
