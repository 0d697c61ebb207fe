use std::fmt;

use ivscout::artifacts::ArtifactError;
use ivscout::gateway::{GatewayError, MockScriptError, StoreError};
use ivscout::pipeline::PipelineError;
use ivscout::prompt::PromptError;
use ivscout::report::ReportError;

pub const EXIT_INVALID: u8 = 1;
pub const EXIT_BACKEND: u8 = 2;
pub const EXIT_CONTRACT: u8 = 3;

/// A failure with the exit code it maps to and a short machine-readable kind.
#[derive(Debug)]
pub struct CliError {
    pub kind: &'static str,
    pub exit: u8,
    pub message: String,
}

impl CliError {
    pub fn invalid(kind: &'static str, message: impl Into<String>) -> Self {
        CliError {
            kind,
            exit: EXIT_INVALID,
            message: message.into(),
        }
    }

    pub fn backend(kind: &'static str, message: impl Into<String>) -> Self {
        CliError {
            kind,
            exit: EXIT_BACKEND,
            message: message.into(),
        }
    }

    pub fn contract(message: impl Into<String>) -> Self {
        CliError {
            kind: "contract-violation",
            exit: EXIT_CONTRACT,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error[{}]: {}", self.kind, self.message)
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        let message = e.to_string();
        match e {
            PipelineError::Gateway(g) => g.into(),
            PipelineError::Validation(_) => CliError::invalid("validation", message),
            PipelineError::MixedQuery { .. } => CliError::invalid("mixed-query", message),
            PipelineError::MixedFlow { .. } => CliError::invalid("mixed-flow", message),
            PipelineError::EmptyParse { .. } => CliError::backend("empty-parse", message),
            ref other if other.is_validation() => CliError::invalid("invalid-input", message),
            _ => CliError::backend("pipeline", message),
        }
    }
}

impl From<GatewayError> for CliError {
    fn from(e: GatewayError) -> Self {
        match e {
            GatewayError::Store(s) => s.into(),
            GatewayError::ReplayMiss { .. } => CliError::backend("replay-miss", e.to_string()),
            other => CliError::backend("backend", other.to_string()),
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Missing(_) => CliError::invalid("missing-transcripts", e.to_string()),
            other => CliError::backend("transcripts", other.to_string()),
        }
    }
}

impl From<ArtifactError> for CliError {
    fn from(e: ArtifactError) -> Self {
        CliError::invalid("artifact", e.to_string())
    }
}

impl From<MockScriptError> for CliError {
    fn from(e: MockScriptError) -> Self {
        CliError::invalid("mock-script", e.to_string())
    }
}

impl From<PromptError> for CliError {
    fn from(e: PromptError) -> Self {
        CliError::invalid("template", e.to_string())
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        CliError::invalid("report", e.to_string())
    }
}
