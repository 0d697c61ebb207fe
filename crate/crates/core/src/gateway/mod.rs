//! Chat sessions over a pluggable completion backend, with record/replay.
//!
//! A [`Gateway`] owns the backend, the optional [`TranscriptStore`], and the
//! sampling configuration. Sessions are plain values handed back to the
//! caller; [`Gateway::chat`] takes `&mut Session`, so calls within one
//! session are sequential by construction while distinct sessions can be
//! driven from different threads.

mod backend;
mod store;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::prompt::{self, RenderedPrompt, TemplateId};

pub use backend::{
    extract_content, BackendError, ChatBackend, ChatRequest, HttpBackend, MockBackend, MockRule,
    MockScript, MockScriptError, Needle, API_KEY_ENV, API_KEY_FALLBACK_ENV, BASE_URL_ENV,
    DEFAULT_BASE_URL,
};
pub use store::{StoreError, TranscriptRecord, TranscriptStore, INDEX_FILE, TRANSCRIPT_FILE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        ChatMessage {
            role,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::new(Role::Assistant, content)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendMeta {
    pub model: String,
    /// `None` means the provider default was used.
    pub temperature: Option<f64>,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

/// One chat conversation. Messages can only be appended through the gateway.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    session_id: String,
    messages: Vec<ChatMessage>,
    backend_meta: BackendMeta,
    /// Indices of assistant messages answering a memorization probe.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    probe_replies: Vec<usize>,
}

impl Session {
    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn messages(&self) -> &[ChatMessage] {
        &self.messages
    }

    pub fn backend_meta(&self) -> &BackendMeta {
        &self.backend_meta
    }

    pub fn probe_replies(&self) -> impl Iterator<Item = (usize, &ChatMessage)> {
        self.probe_replies.iter().map(|&i| (i, &self.messages[i]))
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    /// Index of the most recent assistant message.
    pub fn last_assistant_index(&self) -> Option<usize> {
        self.messages.iter().rposition(|m| m.role == Role::Assistant)
    }

    pub fn has_assistant_message(&self) -> bool {
        self.last_assistant_index().is_some()
    }

    /// Copy with timestamps zeroed, for comparing runs.
    pub fn canonical(&self) -> Session {
        let mut s = self.clone();
        s.backend_meta.created_at = DateTime::<Utc>::UNIX_EPOCH;
        s.backend_meta.updated_at = DateTime::<Utc>::UNIX_EPOCH;
        s
    }

    /// One JSON object per message, suitable for a `.jsonl` artifact.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (i, m) in self.messages.iter().enumerate() {
            let line = serde_json::json!({
                "session_id": self.session_id,
                "index": i,
                "role": m.role,
                "content": m.content,
            });
            out.push_str(&line.to_string());
            out.push('\n');
        }
        out
    }

    fn push_pair(&mut self, user: Option<ChatMessage>, reply: ChatMessage) -> usize {
        if let Some(u) = user {
            self.messages.push(u);
        }
        self.messages.push(reply);
        self.backend_meta.updated_at = Utc::now();
        self.messages.len() - 1
    }
}

/// How the gateway obtains replies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GatewayMode {
    /// Ask the backend; persist nothing.
    Live,
    /// Serve stored replies when the hash is known, else ask the backend and persist.
    Record,
    /// Serve stored replies only.
    Replay,
}

impl fmt::Display for GatewayMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GatewayMode::Live => "live",
            GatewayMode::Record => "record",
            GatewayMode::Replay => "replay",
        })
    }
}

/// Bounded exponential backoff for transport and rate-limit failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    /// Same attempt count, no sleeping.
    pub fn immediate() -> Self {
        RetryPolicy {
            base_delay: Duration::ZERO,
            max_delay: Duration::ZERO,
            ..Self::default()
        }
    }

    /// Delay before retry number `attempt` (1-based count of failures so far).
    pub fn delay(&self, attempt: u32, retry_after: Option<Duration>) -> Duration {
        let exp = self
            .base_delay
            .saturating_mul(2u32.saturating_pow(attempt.saturating_sub(1)));
        exp.max(retry_after.unwrap_or(Duration::ZERO))
            .min(self.max_delay)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GatewayError {
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("rate limited by backend (retry after {})", fmt_retry(.retry_after))]
    RateLimited { retry_after: Option<Duration> },
    #[error("backend rejected request with HTTP {status}: {body}")]
    Api { status: u16, body: String },
    #[error("replay miss: no recorded response for request hash {hash}")]
    ReplayMiss { hash: String },
    #[error("backend returned an empty reply for request hash {hash}")]
    EmptyReply { hash: String },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("backend error: {0}")]
    Backend(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

fn fmt_retry(d: &Option<Duration>) -> String {
    match d {
        Some(d) => format!("{}s", d.as_secs()),
        None => "unspecified".to_string(),
    }
}

/// Recursively sort object keys so the hash ignores map ordering.
fn canonical_json(v: &Value) -> Value {
    match v {
        Value::Object(map) => {
            let sorted: BTreeMap<&String, Value> =
                map.iter().map(|(k, v)| (k, canonical_json(v))).collect();
            Value::Object(sorted.into_iter().map(|(k, v)| (k.clone(), v)).collect())
        }
        Value::Array(items) => Value::Array(items.iter().map(canonical_json).collect()),
        other => other.clone(),
    }
}

/// SHA-256 over the key-sorted JSON of model, messages and sampling params.
pub fn request_hash(req: &ChatRequest) -> String {
    let value = serde_json::to_value(req).expect("chat request serializes");
    let bytes = serde_json::to_vec(&canonical_json(&value)).expect("json value serializes");
    hex::encode(Sha256::digest(&bytes))
}

/// Model and sampling configuration shared by all sessions of a gateway.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub model: String,
    pub temperature: Option<f64>,
    /// Extra provider parameters forwarded verbatim.
    pub params: BTreeMap<String, Value>,
}

impl ModelConfig {
    pub fn new(model: impl Into<String>) -> Self {
        ModelConfig {
            model: model.into(),
            temperature: None,
            params: BTreeMap::new(),
        }
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature = Some(t);
        self
    }

    fn request_params(&self) -> BTreeMap<String, Value> {
        let mut p = self.params.clone();
        if let Some(t) = self.temperature {
            p.insert("temperature".into(), Value::from(t));
        }
        p
    }
}

pub struct Gateway {
    mode: GatewayMode,
    backend: Option<Arc<dyn ChatBackend>>,
    store: Option<Arc<TranscriptStore>>,
    config: ModelConfig,
    retry: RetryPolicy,
    namespace: String,
    next_session: AtomicU64,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("mode", &self.mode)
            .field("backend", &self.backend.as_ref().map(|b| b.name().to_string()))
            .field("model", &self.config.model)
            .field("namespace", &self.namespace)
            .finish()
    }
}

impl Gateway {
    pub fn live(backend: Arc<dyn ChatBackend>, config: ModelConfig) -> Self {
        Self::build(GatewayMode::Live, Some(backend), None, config)
    }

    pub fn record(
        backend: Arc<dyn ChatBackend>,
        store: Arc<TranscriptStore>,
        config: ModelConfig,
    ) -> Self {
        Self::build(GatewayMode::Record, Some(backend), Some(store), config)
    }

    pub fn replay(store: Arc<TranscriptStore>, config: ModelConfig) -> Self {
        Self::build(GatewayMode::Replay, None, Some(store), config)
    }

    fn build(
        mode: GatewayMode,
        backend: Option<Arc<dyn ChatBackend>>,
        store: Option<Arc<TranscriptStore>>,
        config: ModelConfig,
    ) -> Self {
        Gateway {
            mode,
            backend,
            store,
            config,
            retry: RetryPolicy::default(),
            namespace: uuid::Uuid::new_v4().simple().to_string(),
            next_session: AtomicU64::new(1),
        }
    }

    /// A gateway sharing this one's backend, store and configuration, with its
    /// own session namespace.
    pub fn scoped(&self, namespace: impl Into<String>) -> Gateway {
        Gateway {
            mode: self.mode,
            backend: self.backend.clone(),
            store: self.store.clone(),
            config: self.config.clone(),
            retry: self.retry,
            namespace: namespace.into(),
            next_session: AtomicU64::new(1),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// Session ids become `<namespace>-s<n>`, so a replay of a run can
    /// reproduce the ids of the recorded run.
    pub fn with_namespace(mut self, namespace: impl Into<String>) -> Self {
        self.namespace = namespace.into();
        self.next_session = AtomicU64::new(1);
        self
    }

    pub fn mode(&self) -> GatewayMode {
        self.mode
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn namespace(&self) -> &str {
        &self.namespace
    }

    pub fn backend_name(&self) -> &str {
        match (&self.backend, self.mode) {
            (_, GatewayMode::Replay) => "replay",
            (Some(b), _) => b.name(),
            (None, _) => "none",
        }
    }

    /// Start a session, optionally with a system message as its first entry.
    pub fn create_session(&self, system: Option<&RenderedPrompt>) -> Session {
        let n = self.next_session.fetch_add(1, Ordering::SeqCst);
        let now = Utc::now();
        let mut messages = Vec::new();
        if let Some(sys) = system {
            messages.push(ChatMessage::new(Role::System, sys.text.clone()));
        }
        Session {
            session_id: format!("{}-s{}", self.namespace, n),
            messages,
            backend_meta: BackendMeta {
                model: self.config.model.clone(),
                temperature: self.config.temperature,
                created_at: now,
                updated_at: now,
            },
            probe_replies: Vec::new(),
        }
    }

    /// Obtain the assistant's answer to a leading system message that asks a
    /// question of its own (the role-play acknowledgment).
    pub fn acknowledge(&self, session: &mut Session) -> Result<ChatMessage, GatewayError> {
        if session.messages.len() != 1 || session.messages[0].role != Role::System {
            return Err(GatewayError::Precondition(format!(
                "session {} must hold exactly one system message to be acknowledged",
                session.session_id
            )));
        }
        let reply = self.complete(session.messages.clone())?;
        session.push_pair(None, reply.clone());
        Ok(reply)
    }

    /// Send a rendered prompt and append both it and the reply to the session.
    pub fn chat(
        &self,
        session: &mut Session,
        prompt: &RenderedPrompt,
    ) -> Result<ChatMessage, GatewayError> {
        self.chat_text(session, &prompt.text)
    }

    pub fn chat_text(&self, session: &mut Session, text: &str) -> Result<ChatMessage, GatewayError> {
        if text.trim().is_empty() {
            return Err(GatewayError::Precondition("user message is empty".into()));
        }
        if session.messages.last().map(|m| m.role) == Some(Role::User) {
            return Err(GatewayError::Precondition(format!(
                "session {} is awaiting an assistant reply",
                session.session_id
            )));
        }
        let user = ChatMessage::new(Role::User, text);
        let mut messages = session.messages.clone();
        messages.push(user.clone());
        let reply = self.complete(messages)?;
        session.push_pair(Some(user), reply.clone());
        Ok(reply)
    }

    /// Ask whether the previous answers were sourced; the reply is kept on the session.
    pub fn probe_sources(&self, session: &mut Session) -> Result<ChatMessage, GatewayError> {
        if !session.has_assistant_message() {
            return Err(GatewayError::Precondition(format!(
                "session {} has no assistant message to probe",
                session.session_id
            )));
        }
        let probe = prompt::template(TemplateId::MProbe);
        let reply = self.chat_text(session, probe.body)?;
        let idx = session.messages.len() - 1;
        session.probe_replies.push(idx);
        Ok(reply)
    }

    fn complete(&self, messages: Vec<ChatMessage>) -> Result<ChatMessage, GatewayError> {
        let request = ChatRequest {
            model: self.config.model.clone(),
            messages,
            params: self.config.request_params(),
        };
        let hash = request_hash(&request);

        if let Some(store) = &self.store {
            if let Some(rec) = store.get(&hash) {
                tracing::debug!(%hash, "serving stored response");
                return Ok(rec.response);
            }
        }
        if self.mode == GatewayMode::Replay {
            return Err(GatewayError::ReplayMiss { hash });
        }

        let content = self.call_with_retry(&request)?;
        if content.trim().is_empty() {
            return Err(GatewayError::EmptyReply { hash });
        }
        let reply = ChatMessage::assistant(content);
        match (&self.store, self.mode) {
            (Some(store), GatewayMode::Record) => {
                let kept = store.insert_or_get(TranscriptRecord {
                    request_hash: hash,
                    request,
                    response: reply,
                    recorded_at: Utc::now(),
                })?;
                Ok(kept.response)
            }
            _ => Ok(reply),
        }
    }

    fn call_with_retry(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let backend = self
            .backend
            .as_ref()
            .ok_or_else(|| GatewayError::Precondition("no backend configured".into()))?;
        let mut attempt = 0;
        loop {
            attempt += 1;
            match backend.complete(request) {
                Ok(text) => return Ok(text),
                Err(e) if e.is_retryable() && attempt < self.retry.max_attempts => {
                    let retry_after = match &e {
                        BackendError::RateLimited { retry_after } => *retry_after,
                        _ => None,
                    };
                    let wait = self.retry.delay(attempt, retry_after);
                    tracing::warn!(attempt, ?wait, error = %e, "retrying backend call");
                    std::thread::sleep(wait);
                }
                Err(e) => return Err(map_backend_error(e, attempt)),
            }
        }
    }
}

fn map_backend_error(e: BackendError, attempts: u32) -> GatewayError {
    match e {
        BackendError::Transport(message) => GatewayError::Transport { attempts, message },
        BackendError::RateLimited { retry_after } => GatewayError::RateLimited { retry_after },
        BackendError::Api { status, body } => GatewayError::Api { status, body },
        other => GatewayError::Backend(other.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicU32;

    fn prompt(text: &str) -> RenderedPrompt {
        RenderedPrompt {
            template_id: TemplateId::P1,
            text: text.into(),
            slot_bindings: BTreeMap::new(),
        }
    }

    fn mock(replies: &[&str]) -> Arc<dyn ChatBackend> {
        Arc::new(MockBackend::scripted(replies.iter().map(|s| s.to_string())))
    }

    #[test]
    fn create_session_without_system_is_empty_and_ids_differ() {
        let gw = Gateway::live(mock(&[]), ModelConfig::new("m"));
        let a = gw.create_session(None);
        let b = gw.create_session(None);
        assert!(a.is_empty());
        assert_ne!(a.session_id(), b.session_id());
    }

    #[test]
    fn create_session_with_system_message() {
        let gw = Gateway::live(mock(&[]), ModelConfig::new("m"));
        let s = gw.create_session(Some(&prompt("you are x")));
        assert_eq!(s.messages()[0].role, Role::System);
    }

    #[test]
    fn scripted_reply_is_appended_verbatim() {
        let gw = Gateway::live(mock(&["1. A — r1\n2. B — r2"]), ModelConfig::new("m"));
        let mut s = gw.create_session(None);
        let reply = gw.chat(&mut s, &prompt("list")).unwrap();
        assert_eq!(reply.content, "1. A — r1\n2. B — r2");
        assert_eq!(s.len(), 2);
        assert_eq!(s.messages()[1], reply);
    }

    #[test]
    fn record_then_replay_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let store = Arc::new(TranscriptStore::open(dir.path()).unwrap());
        let gw = Gateway::record(mock(&["first", "second"]), store, ModelConfig::new("m"))
            .with_namespace("run");
        let mut s = gw.create_session(None);
        gw.chat(&mut s, &prompt("a")).unwrap();
        gw.chat(&mut s, &prompt("b")).unwrap();

        let store = Arc::new(TranscriptStore::open_existing(dir.path()).unwrap());
        let replay = Gateway::replay(store, ModelConfig::new("m")).with_namespace("run");
        let mut r = replay.create_session(None);
        replay.chat(&mut r, &prompt("a")).unwrap();
        replay.chat(&mut r, &prompt("b")).unwrap();
        assert_eq!(r.messages(), s.messages());
        assert_eq!(r.session_id(), s.session_id());

        let mut other = replay.create_session(None);
        let err = replay.chat(&mut other, &prompt("c")).unwrap_err();
        assert!(matches!(err, GatewayError::ReplayMiss { ref hash } if hash.len() == 64));
        assert!(other.is_empty());
    }

    #[test]
    fn hash_ignores_param_insertion_order() {
        let mut a = ChatRequest {
            model: "m".into(),
            messages: vec![ChatMessage::new(Role::User, "x")],
            params: BTreeMap::new(),
        };
        a.params.insert("top_p".into(), Value::from(1));
        a.params
            .insert("response_format".into(), serde_json::json!({"type":"text","b":1}));
        let mut b = a.clone();
        b.params.clear();
        b.params
            .insert("response_format".into(), serde_json::json!({"b":1,"type":"text"}));
        b.params.insert("top_p".into(), Value::from(1));
        assert_eq!(request_hash(&a), request_hash(&b));
        b.params.insert("top_p".into(), Value::from(2));
        assert_ne!(request_hash(&a), request_hash(&b));
    }

    #[test]
    fn probe_requires_prior_assistant_message() {
        let gw = Gateway::live(
            mock(&["1. A - r", "I didn't have specific sources"]),
            ModelConfig::new("m"),
        );
        let mut s = gw.create_session(None);
        assert!(matches!(gw.probe_sources(&mut s), Err(GatewayError::Precondition(_))));
        gw.chat(&mut s, &prompt("list")).unwrap();
        let reply = gw.probe_sources(&mut s).unwrap();
        assert_eq!(reply.content, "I didn't have specific sources");
        assert_eq!(s.messages()[2].content, "did you have sources for your previous responses?");
        assert_eq!(s.probe_replies().map(|(i, _)| i).collect::<Vec<_>>(), vec![3]);
    }

    #[test]
    fn transport_errors_retry_three_times() {
        let calls = Arc::new(AtomicU32::new(0));
        let c = calls.clone();
        let backend = MockBackend::from_fn(move |_| {
            c.fetch_add(1, Ordering::SeqCst);
            Err(BackendError::Transport("reset".into()))
        });
        let gw = Gateway::live(Arc::new(backend), ModelConfig::new("m"))
            .with_retry(RetryPolicy::immediate());
        let mut s = gw.create_session(None);
        let err = gw.chat(&mut s, &prompt("x")).unwrap_err();
        assert_eq!(err, GatewayError::Transport { attempts: 3, message: "reset".into() });
        assert_eq!(calls.load(Ordering::SeqCst), 3);
        assert!(s.is_empty());
    }

    #[test]
    fn rate_limit_recovers_and_api_errors_do_not_retry() {
        let calls = Arc::new(AtomicU32::new(0));
        let c = calls.clone();
        let backend = MockBackend::from_fn(move |req| {
            let n = c.fetch_add(1, Ordering::SeqCst);
            if req.last_content() == "bad" {
                return Err(BackendError::Api { status: 400, body: "nope".into() });
            }
            if n == 0 {
                Err(BackendError::RateLimited { retry_after: Some(Duration::from_secs(7)) })
            } else {
                Ok("ok".into())
            }
        });
        let gw = Gateway::live(Arc::new(backend), ModelConfig::new("m"))
            .with_retry(RetryPolicy::immediate());
        let mut s = gw.create_session(None);
        assert_eq!(gw.chat(&mut s, &prompt("x")).unwrap().content, "ok");
        let before = calls.load(Ordering::SeqCst);
        assert!(matches!(gw.chat(&mut s, &prompt("bad")), Err(GatewayError::Api { status: 400, .. })));
        assert_eq!(calls.load(Ordering::SeqCst), before + 1);
    }

    #[test]
    fn retry_delay_grows_and_honors_retry_after() {
        let p = RetryPolicy::default();
        assert_eq!(p.delay(1, None), Duration::from_millis(500));
        assert_eq!(p.delay(2, None), Duration::from_millis(1000));
        assert_eq!(p.delay(1, Some(Duration::from_secs(4))), Duration::from_secs(4));
        assert_eq!(p.delay(1, Some(Duration::from_secs(400))), Duration::from_secs(30));
    }

    #[test]
    fn acknowledge_follows_system_message() {
        let gw = Gateway::live(mock(&["yes, i understand."]), ModelConfig::new("m"));
        let mut s = gw.create_session(Some(&prompt("you are x. do you understand?")));
        gw.acknowledge(&mut s).unwrap();
        assert_eq!(
            s.messages().iter().map(|m| m.role).collect::<Vec<_>>(),
            vec![Role::System, Role::Assistant]
        );
        assert!(gw.acknowledge(&mut s).is_err());
    }

    #[test]
    fn empty_reply_is_an_error() {
        let gw = Gateway::live(mock(&["  "]), ModelConfig::new("m"));
        let mut s = gw.create_session(None);
        assert!(matches!(gw.chat(&mut s, &prompt("x")), Err(GatewayError::EmptyReply { .. })));
    }

    #[test]
    fn temperature_is_recorded_and_sent() {
        let backend = MockBackend::from_fn(|req| {
            Ok(format!("{:?}", req.params.get("temperature")))
        });
        let gw = Gateway::live(Arc::new(backend), ModelConfig::new("m").with_temperature(0.5));
        let mut s = gw.create_session(None);
        assert_eq!(gw.chat(&mut s, &prompt("x")).unwrap().content, "Some(Number(0.5))");
        assert_eq!(s.backend_meta().temperature, Some(0.5));
    }
}
