//! On-disk layout of runs and aggregates.
//!
//! A run directory holds:
//!
//! ```text
//! query.json              the validated query
//! invocation.json         how the run was produced (no URLs, no keys)
//! run.json                the full run, reloadable with [`load_run`]
//! sessions/<id>.jsonl     one line per message
//! candidates_step<k>.json candidate set after list-producing step k
//! subset_report.json      subset checks between steps
//! adversary.json          only after an adversarial round
//! report.md               the Markdown report
//! transcripts/            recorded replies, when recording
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::causal_model::CausalQuery;
use crate::pipeline::{Aggregate, DiscoveryRun, FlowKind, ModelSummary, PipelineOptions};
use crate::report::{Report, ReportFormat};

pub const QUERY_FILE: &str = "query.json";
pub const INVOCATION_FILE: &str = "invocation.json";
pub const RUN_FILE: &str = "run.json";
pub const SESSIONS_DIR: &str = "sessions";
pub const SUBSET_REPORT_FILE: &str = "subset_report.json";
pub const ADVERSARY_FILE: &str = "adversary.json";
pub const TRANSCRIPTS_DIR: &str = "transcripts";
pub const AGGREGATE_FILE: &str = "aggregate.json";

#[derive(Debug, thiserror::Error)]
pub enum ArtifactError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{0} is not a run directory (no {RUN_FILE})")]
    NotARun(PathBuf),
    #[error("{0} is not an aggregate directory (no {AGGREGATE_FILE})")]
    NotAnAggregate(PathBuf),
}

/// Where replies came from for a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceMode {
    Live,
    Record,
    Replay,
    Mock,
}

impl SourceMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            SourceMode::Live => "live",
            SourceMode::Record => "record",
            SourceMode::Replay => "replay",
            SourceMode::Mock => "mock",
        }
    }
}

impl std::fmt::Display for SourceMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SourceMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "live" => Ok(SourceMode::Live),
            "record" => Ok(SourceMode::Record),
            "replay" => Ok(SourceMode::Replay),
            "mock" => Ok(SourceMode::Mock),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

/// Settings a run was produced with. Endpoints and credentials are never
/// part of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Invocation {
    pub tool_version: String,
    pub mode: SourceMode,
    pub flow: FlowKind,
    pub model: ModelSummary,
    pub options: PipelineOptions,
    /// Number of independent runs requested together.
    pub runs: usize,
    pub adversary: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adversary_model: Option<ModelSummary>,
    /// File name of the behavior script, for mock runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mock_script: Option<String>,
    pub created_at: DateTime<Utc>,
}

fn io_err(path: &Path, source: std::io::Error) -> ArtifactError {
    ArtifactError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), ArtifactError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), ArtifactError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| ArtifactError::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, ArtifactError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| ArtifactError::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Read a query file. Validation is left to the caller.
pub fn load_query(path: &Path) -> Result<CausalQuery, ArtifactError> {
    read_json(path)
}

pub fn transcripts_dir(run_dir: &Path) -> PathBuf {
    run_dir.join(TRANSCRIPTS_DIR)
}

pub fn step_file(step: usize) -> String {
    format!("candidates_step{step}.json")
}

/// File name for a session transcript; ids are made of safe characters but
/// anything else is replaced to keep the name portable.
pub fn session_file(session_id: &str) -> String {
    let safe: String = session_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{safe}.jsonl")
}

fn clear_generated(dir: &Path) -> Result<(), ArtifactError> {
    let sessions = dir.join(SESSIONS_DIR);
    if sessions.is_dir() {
        fs::remove_dir_all(&sessions).map_err(|e| io_err(&sessions, e))?;
    }
    if let Ok(entries) = fs::read_dir(dir) {
        for entry in entries.flatten() {
            let name = entry.file_name();
            let name = name.to_string_lossy();
            if name.starts_with("candidates_step") && name.ends_with(".json") {
                fs::remove_file(entry.path()).map_err(|e| io_err(&entry.path(), e))?;
            }
        }
    }
    let adversary = dir.join(ADVERSARY_FILE);
    if adversary.is_file() {
        fs::remove_file(&adversary).map_err(|e| io_err(&adversary, e))?;
    }
    Ok(())
}

/// Write every artifact of `run` except the invocation record and the
/// transcripts, replacing artifacts of an earlier save.
pub fn save_run(dir: &Path, run: &DiscoveryRun) -> Result<(), ArtifactError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    clear_generated(dir)?;
    write_json(&dir.join(QUERY_FILE), &run.query)?;
    write_json(&dir.join(RUN_FILE), run)?;
    for session in &run.sessions {
        let path = dir.join(SESSIONS_DIR).join(session_file(session.session_id()));
        write_text(&path, &session.to_jsonl())?;
    }
    for (i, step) in run.step_sets.iter().enumerate() {
        write_json(&dir.join(step_file(i + 1)), step)?;
    }
    write_json(&dir.join(SUBSET_REPORT_FILE), &run.subset_reports)?;
    if let Some(material) = &run.adversary_material {
        write_json(&dir.join(ADVERSARY_FILE), material)?;
    }
    write_text(&dir.join(report_file(ReportFormat::Markdown)), &Report::from_run(run).to_markdown())?;
    tracing::debug!(dir = %dir.display(), run_id = %run.run_id, "run saved");
    Ok(())
}

pub fn load_run(dir: &Path) -> Result<DiscoveryRun, ArtifactError> {
    let path = dir.join(RUN_FILE);
    if !path.is_file() {
        return Err(ArtifactError::NotARun(dir.to_path_buf()));
    }
    read_json(&path)
}

pub fn save_invocation(dir: &Path, invocation: &Invocation) -> Result<(), ArtifactError> {
    write_json(&dir.join(INVOCATION_FILE), invocation)
}

pub fn load_invocation(dir: &Path) -> Result<Option<Invocation>, ArtifactError> {
    let path = dir.join(INVOCATION_FILE);
    if !path.is_file() {
        return Ok(None);
    }
    read_json(&path).map(Some)
}

pub fn report_file(format: ReportFormat) -> String {
    format!("report.{}", format.extension())
}

/// Write a rendered report next to the other artifacts; returns its path.
pub fn save_report(dir: &Path, report: &Report, format: ReportFormat) -> Result<PathBuf, ArtifactError> {
    let path = dir.join(report_file(format));
    write_text(&path, &report.render(format))?;
    Ok(path)
}

pub fn save_aggregate(dir: &Path, aggregate: &Aggregate) -> Result<(), ArtifactError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    write_json(&dir.join(AGGREGATE_FILE), aggregate)?;
    write_json(&dir.join(QUERY_FILE), &aggregate.query)?;
    write_text(
        &dir.join(report_file(ReportFormat::Markdown)),
        &Report::from_aggregate(aggregate).to_markdown(),
    )
}

pub fn load_aggregate(dir: &Path) -> Result<Aggregate, ArtifactError> {
    let path = dir.join(AGGREGATE_FILE);
    if !path.is_file() {
        return Err(ArtifactError::NotAnAggregate(dir.to_path_buf()));
    }
    read_json(&path)
}

pub fn is_run_dir(dir: &Path) -> bool {
    dir.join(RUN_FILE).is_file()
}

pub fn is_aggregate_dir(dir: &Path) -> bool {
    dir.join(AGGREGATE_FILE).is_file()
}
