//! Chat-completion backends: an OpenAI-compatible HTTP client and a
//! scriptable mock.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::ChatMessage;

/// Environment variable holding the bearer token.
pub const API_KEY_ENV: &str = "IVSCOUT_API_KEY";
/// Fallback token variable, for compatibility with existing setups.
pub const API_KEY_FALLBACK_ENV: &str = "OPENAI_API_KEY";
/// Environment variable overriding the backend base URL.
pub const BASE_URL_ENV: &str = "IVSCOUT_BASE_URL";
pub const DEFAULT_BASE_URL: &str = "https://api.openai.com";

/// One chat-completion call: the full conversation so far plus sampling params.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    #[serde(default)]
    pub params: BTreeMap<String, Value>,
}

impl ChatRequest {
    /// Wire body for `/v1/chat/completions`.
    pub fn to_wire(&self) -> Value {
        let mut body = serde_json::Map::new();
        body.insert("model".into(), json!(self.model));
        body.insert(
            "messages".into(),
            Value::Array(
                self.messages
                    .iter()
                    .map(|m| json!({"role": m.role.as_str(), "content": m.content}))
                    .collect(),
            ),
        );
        for (k, v) in &self.params {
            body.insert(k.clone(), v.clone());
        }
        Value::Object(body)
    }

    /// Content of the most recent message.
    pub fn last_content(&self) -> &str {
        self.messages.last().map(|m| m.content.as_str()).unwrap_or("")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("rate limited (retry after {retry_after:?})")]
    RateLimited { retry_after: Option<Duration> },
    #[error("backend returned HTTP {status}: {body}")]
    Api { status: u16, body: String },
    #[error("malformed backend response: {0}")]
    Malformed(String),
    #[error("mock script: {0}")]
    Script(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Transport(_) | BackendError::RateLimited { .. })
    }
}

/// Anything that can answer a chat request with assistant text.
pub trait ChatBackend: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError>;
}

/// OpenAI-compatible `POST <base_url>/v1/chat/completions` client.
pub struct HttpBackend {
    base_url: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpBackend")
            .field("base_url", &self.base_url)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

impl HttpBackend {
    pub fn new(base_url: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build();
        HttpBackend {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key,
            agent: config.into(),
        }
    }

    /// Base URL and key from the environment, with optional explicit base URL.
    pub fn from_env(base_url: Option<String>, timeout: Duration) -> Self {
        let base = base_url
            .or_else(|| std::env::var(BASE_URL_ENV).ok())
            .unwrap_or_else(|| DEFAULT_BASE_URL.to_string());
        let key = std::env::var(API_KEY_ENV)
            .or_else(|_| std::env::var(API_KEY_FALLBACK_ENV))
            .ok()
            .filter(|k| !k.is_empty());
        HttpBackend::new(base, key, timeout)
    }

    pub fn endpoint(&self) -> String {
        format!("{}/v1/chat/completions", self.base_url)
    }
}

impl ChatBackend for HttpBackend {
    fn name(&self) -> &str {
        "http"
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let mut call = self
            .agent
            .post(&self.endpoint())
            .header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = call
            .send_json(request.to_wire())
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        let retry_after = response
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|s| s.trim().parse::<u64>().ok())
            .map(Duration::from_secs);
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        match status {
            200..=299 => extract_content(&body),
            429 => Err(BackendError::RateLimited { retry_after }),
            500..=599 => Err(BackendError::Transport(format!("HTTP {status}"))),
            _ => Err(BackendError::Api { status, body }),
        }
    }
}

/// Pull `choices[0].message.content` out of a completion response body.
pub fn extract_content(body: &str) -> Result<String, BackendError> {
    let value: Value =
        serde_json::from_str(body).map_err(|e| BackendError::Malformed(e.to_string()))?;
    value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| BackendError::Malformed("missing choices[0].message.content".into()))
}

type Responder = dyn Fn(&ChatRequest) -> Result<String, BackendError> + Send + Sync;

/// Deterministic stand-in backend for tests and dry runs.
pub struct MockBackend {
    responder: Box<Responder>,
}

impl fmt::Debug for MockBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("MockBackend")
    }
}

impl MockBackend {
    pub fn from_fn<F>(f: F) -> Self
    where
        F: Fn(&ChatRequest) -> Result<String, BackendError> + Send + Sync + 'static,
    {
        MockBackend {
            responder: Box::new(f),
        }
    }

    /// Replies served in order, one per call.
    pub fn scripted<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let queue: Mutex<std::collections::VecDeque<String>> =
            Mutex::new(replies.into_iter().map(Into::into).collect());
        MockBackend::from_fn(move |_| {
            queue
                .lock()
                .expect("mock queue poisoned")
                .pop_front()
                .ok_or_else(|| BackendError::Script("scripted replies exhausted".into()))
        })
    }

    pub fn from_script(script: MockScript) -> Self {
        let counters = Mutex::new(vec![0usize; script.rules.len()]);
        MockBackend::from_fn(move |req| {
            let last = req.last_content();
            for (i, rule) in script.rules.iter().enumerate() {
                if rule.matches(last) {
                    let mut counters = counters.lock().expect("mock counters poisoned");
                    let n = counters[i];
                    counters[i] += 1;
                    return Ok(rule.reply_at(n));
                }
            }
            script.default_reply.clone().ok_or_else(|| {
                let preview: String = last.chars().take(80).collect();
                BackendError::Script(format!("no rule matches message starting `{preview}`"))
            })
        })
    }

    /// Load a JSON behavior script; `reply_file` paths resolve against its directory.
    pub fn load_script(path: &Path) -> Result<Self, MockScriptError> {
        let text = std::fs::read_to_string(path).map_err(|e| MockScriptError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut script: MockScript =
            serde_json::from_str(&text).map_err(|e| MockScriptError::Parse {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        script.resolve_files(base)?;
        Ok(MockBackend::from_script(script))
    }
}

impl ChatBackend for MockBackend {
    fn name(&self) -> &str {
        "mock"
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        (self.responder)(request)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MockScriptError {
    #[error("cannot read mock script {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("invalid mock script {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("rule {index} has no reply")]
    EmptyRule { index: usize },
}

/// Substring pattern: one needle, or several that must all be present.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Needle {
    One(String),
    All(Vec<String>),
}

impl Needle {
    fn matches(&self, haystack: &str) -> bool {
        match self {
            Needle::One(n) => haystack.contains(n.as_str()),
            Needle::All(ns) => ns.iter().all(|n| haystack.contains(n.as_str())),
        }
    }
}

/// Behavior script for [`MockBackend::from_script`].
///
/// ```json
/// {
///   "rules": [
///     {"contains": "do you understand", "reply": "yes."},
///     {"contains": ["among", "factors listed above"], "reply_file": "step2.txt"},
///     {"contains": "list 40 factors", "replies": ["1. A - a", "1. B - b"]}
///   ],
///   "default_reply": null
/// }
/// ```
///
/// Rules are tried in order against the latest message. A rule with
/// several `replies` serves them in sequence and then repeats the last.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockScript {
    pub rules: Vec<MockRule>,
    #[serde(default)]
    pub default_reply: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockRule {
    pub contains: Needle,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub replies: Vec<String>,
}

impl MockRule {
    pub fn new(contains: impl Into<String>, reply: impl Into<String>) -> Self {
        MockRule {
            contains: Needle::One(contains.into()),
            reply: Some(reply.into()),
            reply_file: None,
            replies: Vec::new(),
        }
    }

    fn matches(&self, text: &str) -> bool {
        self.contains.matches(text)
    }

    fn reply_at(&self, n: usize) -> String {
        if self.replies.is_empty() {
            return self.reply.clone().unwrap_or_default();
        }
        self.replies[n.min(self.replies.len() - 1)].clone()
    }
}

impl MockScript {
    fn resolve_files(&mut self, base: &Path) -> Result<(), MockScriptError> {
        for (index, rule) in self.rules.iter_mut().enumerate() {
            if let Some(file) = &rule.reply_file {
                let path = base.join(file);
                let text = std::fs::read_to_string(&path).map_err(|e| MockScriptError::Io {
                    path: path.clone(),
                    message: e.to_string(),
                })?;
                rule.reply = Some(text);
            }
            if rule.reply.is_none() && rule.replies.is_empty() {
                return Err(MockScriptError::EmptyRule { index });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(text: &str) -> ChatRequest {
        ChatRequest {
            model: "m".into(),
            messages: vec![ChatMessage::new(crate::gateway::Role::User, text)],
            params: BTreeMap::new(),
        }
    }

    #[test]
    fn wire_body_shape() {
        let mut r = req("hi");
        r.params.insert("temperature".into(), json!(0.2));
        assert_eq!(
            r.to_wire(),
            json!({"model":"m","messages":[{"role":"user","content":"hi"}],"temperature":0.2})
        );
    }

    #[test]
    fn extract_content_reads_first_choice() {
        let body = r#"{"choices":[{"message":{"role":"assistant","content":"1. A"}}]}"#;
        assert_eq!(extract_content(body).unwrap(), "1. A");
        assert!(matches!(extract_content("{}"), Err(BackendError::Malformed(_))));
    }

    #[test]
    fn script_rules_match_in_order_and_sequence_replies() {
        let script = MockScript {
            rules: vec![
                MockRule {
                    contains: Needle::All(vec!["among".into(), "above".into()]),
                    reply: None,
                    reply_file: None,
                    replies: vec!["first".into(), "second".into()],
                },
                MockRule::new("list", "listed"),
            ],
            default_reply: None,
        };
        let mock = MockBackend::from_script(script);
        assert_eq!(mock.complete(&req("list 4")).unwrap(), "listed");
        assert_eq!(mock.complete(&req("among those above")).unwrap(), "first");
        assert_eq!(mock.complete(&req("among those above")).unwrap(), "second");
        assert_eq!(mock.complete(&req("among those above")).unwrap(), "second");
        assert!(matches!(mock.complete(&req("nothing")), Err(BackendError::Script(_))));
    }

    #[test]
    fn scripted_queue_exhausts() {
        let mock = MockBackend::scripted(["a"]);
        assert_eq!(mock.complete(&req("x")).unwrap(), "a");
        assert!(mock.complete(&req("x")).is_err());
    }

    #[test]
    fn load_script_resolves_reply_files() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("r.txt"), "1. A - x").unwrap();
        std::fs::write(
            dir.path().join("s.json"),
            r#"{"rules":[{"contains":"go","reply_file":"r.txt"}]}"#,
        )
        .unwrap();
        let mock = MockBackend::load_script(&dir.path().join("s.json")).unwrap();
        assert_eq!(mock.complete(&req("go")).unwrap(), "1. A - x");
    }

    #[test]
    fn rule_without_reply_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("s.json"), r#"{"rules":[{"contains":"go"}]}"#).unwrap();
        assert_eq!(
            MockBackend::load_script(&dir.path().join("s.json")).unwrap_err(),
            MockScriptError::EmptyRule { index: 0 }
        );
    }

    #[test]
    fn debug_output_redacts_key() {
        let b = HttpBackend::new("http://x/", Some("sk-secret".into()), Duration::from_secs(1));
        assert!(!format!("{b:?}").contains("sk-secret"));
        assert_eq!(b.endpoint(), "http://x/v1/chat/completions");
    }
}
