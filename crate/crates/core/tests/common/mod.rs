#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use ivscout::causal_model::CausalQuery;
use ivscout::gateway::{
    BackendError, ChatBackend, ChatRequest, Gateway, MockBackend, ModelConfig, RetryPolicy,
};

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn query(name: &str) -> CausalQuery {
    let path = fixtures().join("queries").join(format!("{name}.json"));
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

pub fn script(name: &str) -> Arc<dyn ChatBackend> {
    let path = fixtures().join("scripts").join(format!("{name}.json"));
    Arc::new(MockBackend::load_script(&path).unwrap())
}

pub fn config() -> ModelConfig {
    ModelConfig::new("mock-model").with_temperature(0.0)
}

pub fn live(backend: Arc<dyn ChatBackend>, ns: &str) -> Gateway {
    Gateway::live(backend, config())
        .with_namespace(ns)
        .with_retry(RetryPolicy::immediate())
}

pub fn scripted(replies: &[&str]) -> Arc<dyn ChatBackend> {
    Arc::new(MockBackend::scripted(replies.iter().map(|s| s.to_string())))
}

pub fn responder<F>(f: F) -> Arc<dyn ChatBackend>
where
    F: Fn(&str) -> String + Send + Sync + 'static,
{
    Arc::new(MockBackend::from_fn(move |req: &ChatRequest| {
        Ok::<_, BackendError>(f(req.last_content()))
    }))
}

/// `1. name: why name` lines.
pub fn list(names: &[&str]) -> String {
    names
        .iter()
        .enumerate()
        .map(|(i, n)| format!("{}. {}: because {}", i + 1, n, n.to_lowercase()))
        .collect::<Vec<_>>()
        .join("\n")
}
