use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use ivscout::artifacts::{self, SourceMode};
use ivscout::causal_model::{CausalQuery, Covariates, Design};
use ivscout::gateway::{
    ChatBackend, Gateway, HttpBackend, MockBackend, ModelConfig, RetryPolicy, TranscriptStore,
    API_KEY_ENV, API_KEY_FALLBACK_ENV,
};

use crate::args::{BackendArgs, QueryArgs};
use crate::error::CliError;

/// Reply source shared by the defender and critic gateways of one command.
pub struct Source {
    pub mode: SourceMode,
    backend: Option<Arc<dyn ChatBackend>>,
    store: Option<Arc<TranscriptStore>>,
    retry: RetryPolicy,
}

impl Source {
    /// Build the backend and open the transcript store; `default_store` is
    /// used when `--transcripts` is absent.
    pub fn open(args: &BackendArgs, default_store: &Path) -> Result<Source, CliError> {
        let mode: SourceMode = args.mode.into();
        let store_dir = args
            .transcripts
            .clone()
            .unwrap_or_else(|| default_store.to_path_buf());
        if args.mock_script.is_some() && mode != SourceMode::Mock {
            return Err(CliError::invalid(
                "invocation",
                "--mock-script is only used with --mode mock",
            ));
        }
        let retry = RetryPolicy {
            max_attempts: args.max_attempts.max(1),
            ..RetryPolicy::default()
        };
        let http = || -> Arc<dyn ChatBackend> {
            if std::env::var(API_KEY_ENV).is_err() && std::env::var(API_KEY_FALLBACK_ENV).is_err() {
                tracing::warn!("no API key in {API_KEY_ENV} or {API_KEY_FALLBACK_ENV}; sending unauthenticated requests");
            }
            Arc::new(HttpBackend::from_env(
                args.base_url.clone(),
                Duration::from_secs(args.timeout_secs),
            ))
        };
        let (backend, store) = match mode {
            SourceMode::Live => (Some(http()), None),
            SourceMode::Record => (Some(http()), Some(TranscriptStore::open(&store_dir)?)),
            SourceMode::Replay => (None, Some(TranscriptStore::open_existing(&store_dir)?)),
            SourceMode::Mock => {
                let script = args.mock_script.as_ref().ok_or_else(|| {
                    CliError::invalid("invocation", "--mode mock needs --mock-script FILE")
                })?;
                let backend: Arc<dyn ChatBackend> = Arc::new(MockBackend::load_script(script)?);
                (Some(backend), Some(TranscriptStore::open(&store_dir)?))
            }
        };
        Ok(Source {
            mode,
            backend,
            store: store.map(Arc::new),
            retry,
        })
    }

    /// Replay-only source over an existing store.
    pub fn replay(store_dir: &Path) -> Result<Source, CliError> {
        Ok(Source {
            mode: SourceMode::Replay,
            backend: None,
            store: Some(Arc::new(TranscriptStore::open_existing(store_dir)?)),
            retry: RetryPolicy::immediate(),
        })
    }

    pub fn gateway(&self, config: ModelConfig, namespace: &str) -> Gateway {
        let gw = match (&self.backend, &self.store) {
            (Some(b), Some(s)) => Gateway::record(b.clone(), s.clone(), config),
            (Some(b), None) => Gateway::live(b.clone(), config),
            (None, Some(s)) => Gateway::replay(s.clone(), config),
            (None, None) => unreachable!("a source has a backend or a store"),
        };
        gw.with_retry(self.retry.clone()).with_namespace(namespace)
    }
}

pub fn model_config(model: &str, temperature: Option<f64>) -> ModelConfig {
    let config = ModelConfig::new(model);
    match temperature {
        Some(t) => config.with_temperature(t),
        None => config,
    }
}

/// Transcript store of a saved run: its own `transcripts/`, else the one
/// shared by sibling runs in the parent directory.
pub fn run_store(run_dir: &Path) -> PathBuf {
    let own = artifacts::transcripts_dir(run_dir);
    if own.is_dir() {
        return own;
    }
    match run_dir.parent() {
        Some(parent) if artifacts::transcripts_dir(parent).is_dir() => {
            artifacts::transcripts_dir(parent)
        }
        _ => own,
    }
}

/// Query from the file (if any) with flag overrides applied. Validation is
/// left to the pipeline so every violation is reported at once.
pub fn build_query(design: Design, args: &QueryArgs) -> Result<CausalQuery, CliError> {
    let mut q = match &args.query {
        Some(path) => artifacts::load_query(path)
            .map_err(|e| CliError::invalid("query", e.to_string()))?,
        None => CausalQuery::new(design, "", "", "", ""),
    };
    let set = |slot: &mut String, v: &Option<String>| {
        if let Some(v) = v {
            *slot = v.clone();
        }
    };
    set(&mut q.agent, &args.agent);
    set(&mut q.scenario, &args.scenario);
    set(&mut q.treatment, &args.treatment);
    set(&mut q.outcome, &args.outcome);
    if args.outcome_t.is_some() {
        q.outcome_t = args.outcome_t.clone();
    }
    if args.outcome_level.is_some() {
        q.outcome_level = args.outcome_level.clone();
    }
    if args.confounders.is_some() {
        q.confounders = args.confounders.clone();
    }
    if !args.covariates.is_empty() {
        q.covariates = Some(Covariates::specific(args.covariates.iter().cloned()));
    } else if !args.covariate_kinds.is_empty() {
        q.covariates = Some(Covariates::loose(args.covariate_kinds.iter().cloned()));
    }
    if !args.categories.is_empty() {
        q.category_split = Some(args.categories.clone());
    }
    let b = &mut q.budgets;
    for (slot, value) in [
        (&mut b.k0, args.k0),
        (&mut b.k, args.k),
        (&mut b.l0, args.l0),
        (&mut b.l, args.l),
        (&mut b.j0, args.j0),
        (&mut b.j, args.j),
    ] {
        if value.is_some() {
            *slot = value;
        }
    }
    Ok(q)
}

/// Run ids become file and session names, so keep them to a safe alphabet.
pub fn sanitize_id(raw: &str) -> String {
    let id: String = raw
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '-' })
        .collect();
    let id = id.trim_matches('-').to_string();
    if id.is_empty() {
        "run".to_string()
    } else {
        id
    }
}
