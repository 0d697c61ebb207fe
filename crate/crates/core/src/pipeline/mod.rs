//! Flow orchestration over sessions and candidate sets.
//!
//! Each flow is a fixed sequence of catalog templates sent through a
//! [`Gateway`]. Every list-producing step is parsed into a [`CandidateSet`]
//! and checked against the set it was supposed to be chosen from; contract
//! breaches become [`RunFlag`]s on the resulting [`DiscoveryRun`] rather than
//! errors, so a run is always inspectable after the fact.

mod adversary;
mod aggregate;
mod flows;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::causal_model::{validate_query, AssumptionTag, CausalQuery, Design, Violation};
use crate::extraction::{
    match_subset, parse_candidates, CandidateSet, OriginStep, ParseExpectations, ParseWarning, SubsetReport,
    DEFAULT_RENAME_THRESHOLD,
};
use crate::gateway::{ChatMessage, Gateway, GatewayError, Session};
use crate::prompt::{render_with, NumberStyle, PromptError, RenderOptions, RenderedPrompt, TemplateId};

pub use adversary::{run_adversarial_round, AdversaryMaterial, Critique};
pub use aggregate::{aggregate, aggregate_runs, combine_sets, Aggregate, AggregateMode};
pub use flows::{
    run_ci_search, run_did_search, run_iv_joint_covariates, run_iv_three_step, run_iv_two_step,
    run_rdd_search, CURATION_FILE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowKind {
    IvTwoStep,
    IvTwoStepWithCovariates,
    IvThreeStep,
    IvJointCovariateSearch,
    CiSearch,
    DidSearch,
    RddSearch,
    AdversarialRound,
}

impl FlowKind {
    pub const ALL: [FlowKind; 8] = [
        FlowKind::IvTwoStep,
        FlowKind::IvTwoStepWithCovariates,
        FlowKind::IvThreeStep,
        FlowKind::IvJointCovariateSearch,
        FlowKind::CiSearch,
        FlowKind::DidSearch,
        FlowKind::RddSearch,
        FlowKind::AdversarialRound,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            FlowKind::IvTwoStep => "iv-two-step",
            FlowKind::IvTwoStepWithCovariates => "iv-two-step-with-covariates",
            FlowKind::IvThreeStep => "iv-three-step",
            FlowKind::IvJointCovariateSearch => "iv-joint-covariate-search",
            FlowKind::CiSearch => "ci-search",
            FlowKind::DidSearch => "did-search",
            FlowKind::RddSearch => "rdd-search",
            FlowKind::AdversarialRound => "adversarial-round",
        }
    }

    /// Templates the flow sends, in order, when every optional step is on.
    pub fn template_sequence(&self) -> &'static [TemplateId] {
        match self {
            FlowKind::IvTwoStep => &[TemplateId::P1, TemplateId::P2],
            FlowKind::IvTwoStepWithCovariates => &[TemplateId::P1, TemplateId::P2X],
            FlowKind::IvThreeStep => &[TemplateId::A0, TemplateId::A1, TemplateId::A2, TemplateId::A3],
            FlowKind::IvJointCovariateSearch => &[TemplateId::P1X, TemplateId::P2X],
            FlowKind::CiSearch => &[TemplateId::C1, TemplateId::C2],
            FlowKind::DidSearch => &[TemplateId::C1, TemplateId::C2, TemplateId::DidEmph],
            FlowKind::RddSearch => &[TemplateId::R1, TemplateId::R2, TemplateId::R3],
            FlowKind::AdversarialRound => &[TemplateId::AD1, TemplateId::P3],
        }
    }

    /// The design a query must declare to run this flow.
    pub fn design(&self) -> Option<Design> {
        match self {
            FlowKind::IvTwoStep
            | FlowKind::IvTwoStepWithCovariates
            | FlowKind::IvThreeStep
            | FlowKind::IvJointCovariateSearch => Some(Design::Iv),
            FlowKind::CiSearch => Some(Design::ConditionalIndependence),
            FlowKind::DidSearch => Some(Design::DiffInDiff),
            FlowKind::RddSearch => Some(Design::RegressionDiscontinuity),
            FlowKind::AdversarialRound => None,
        }
    }

    /// Table column heading for the suggested variables.
    pub fn variable_label(&self) -> &'static str {
        match self.design() {
            Some(Design::ConditionalIndependence) | Some(Design::DiffInDiff) => {
                "Control Variables Suggested"
            }
            Some(Design::RegressionDiscontinuity) => "Running Variables Suggested",
            _ => "IVs Suggested",
        }
    }
}

impl fmt::Display for FlowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FlowKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FlowKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s.trim())
            .ok_or_else(|| format!("unknown flow `{s}`"))
    }
}

/// Switches that shape a run beyond what the query itself says.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineOptions {
    pub number_style: NumberStyle,
    pub hard_to_quantify: bool,
    /// Ask the refinement step for a second, contrasting list.
    pub contrast: bool,
    /// Names to ask the model about after refinement, one follow-up each.
    pub explain_exclusions: Vec<String>,
    /// Follow the final step with a question about sources.
    pub probe_sources: bool,
    /// Three-step flow only: run each step in its own session.
    pub separate_sessions: bool,
    /// Response-format instruction for the role-play system message.
    pub format_instruction: Option<String>,
    /// DiD flow: send the trend emphasis follow-up.
    pub did_emphasis: bool,
    /// RDD flow: send the manipulation filter step.
    pub rdd_refine: bool,
    /// Joint flow: pause after the first step so covariates can be curated
    /// by editing this file.
    pub curation_file: Option<PathBuf>,
    pub rename_threshold: f64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            number_style: NumberStyle::Digits,
            hard_to_quantify: false,
            contrast: false,
            explain_exclusions: Vec::new(),
            probe_sources: false,
            separate_sessions: false,
            format_instruction: None,
            did_emphasis: true,
            rdd_refine: false,
            curation_file: None,
            rename_threshold: DEFAULT_RENAME_THRESHOLD,
        }
    }
}

/// One parsed list-producing step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 1-based position among the run's list-producing steps.
    pub step: usize,
    pub template: TemplateId,
    pub set: CandidateSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSubsetReport {
    pub from: String,
    pub to: String,
    pub report: SubsetReport,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepWarning {
    pub at: String,
    pub warning: ParseWarning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Explanation {
    pub excluded: String,
    pub text: String,
    pub session_id: String,
    pub message_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub session_id: String,
    pub message_index: usize,
    pub text: String,
}

/// Something about the run a reviewer should know.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunFlag {
    /// A refined list named variables absent from the list it refines.
    InjectedItems { at: String, names: Vec<String> },
    /// A refined list reworded variables; reported, never merged.
    RenamedItems { at: String, pairs: Vec<(String, String)> },
    /// The defender rejected every candidate after critique.
    PessimisticRejection,
    CountBelowBudget { at: String, expected: u32, found: usize },
}

impl RunFlag {
    /// Flags that breach a step contract, as opposed to being informational.
    pub fn is_contract_violation(&self) -> bool {
        matches!(self, RunFlag::InjectedItems { .. } | RunFlag::PessimisticRejection)
    }

    pub fn name(&self) -> &'static str {
        match self {
            RunFlag::InjectedItems { .. } => "injected-items",
            RunFlag::RenamedItems { .. } => "renamed-items",
            RunFlag::PessimisticRejection => "pessimistic-rejection",
            RunFlag::CountBelowBudget { .. } => "count-below-budget",
        }
    }
}

impl fmt::Display for RunFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunFlag::InjectedItems { at, names } => {
                write!(f, "injected-items at {at}: {}", names.join("; "))
            }
            RunFlag::RenamedItems { at, pairs } => {
                let p: Vec<String> = pairs.iter().map(|(n, s)| format!("{n} <- {s}")).collect();
                write!(f, "renamed-items at {at}: {}", p.join("; "))
            }
            RunFlag::PessimisticRejection => {
                f.write_str("pessimistic-rejection: pre-adversary set retained")
            }
            RunFlag::CountBelowBudget { at, expected, found } => {
                write!(f, "count-below-budget at {at}: {found} of {expected}")
            }
        }
    }
}

/// Model settings echoed into run records and report footers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: String,
    pub temperature: Option<f64>,
}

/// One end-to-end execution of a flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryRun {
    pub run_id: String,
    pub query: CausalQuery,
    pub flow: FlowKind,
    pub options: PipelineOptions,
    pub model: ModelSummary,
    pub sessions: Vec<Session>,
    pub step_sets: Vec<StepRecord>,
    pub subset_reports: Vec<StepSubsetReport>,
    /// The run's answer.
    pub final_set: CandidateSet,
    /// Characteristics listed by the joint covariate flow.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariate_set: Option<CandidateSet>,
    /// The contrasting list, kept apart from the answer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contrast_set: Option<CandidateSet>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub explanations: Vec<Explanation>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub probes: Vec<ProbeRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adversary_material: Option<AdversaryMaterial>,
    pub flags: Vec<RunFlag>,
    pub warnings: Vec<StepWarning>,
    pub notes: Vec<String>,
    pub created_at: DateTime<Utc>,
    pub elapsed_ms: u64,
}

impl DiscoveryRun {
    pub fn session(&self, id: &str) -> Option<&Session> {
        self.sessions.iter().find(|s| s.session_id() == id)
    }

    /// The transcript message a candidate was read from.
    pub fn resolve(&self, session_id: &str, message_index: usize) -> Option<&ChatMessage> {
        self.session(session_id)?.messages().get(message_index)
    }

    pub fn has_contract_violation(&self) -> bool {
        self.flags.iter().any(RunFlag::is_contract_violation)
    }

    /// Copy with wall-clock fields zeroed, for field-by-field comparison.
    pub fn canonical(&self) -> DiscoveryRun {
        let mut r = self.clone();
        r.created_at = DateTime::<Utc>::UNIX_EPOCH;
        r.elapsed_ms = 0;
        r.sessions = r.sessions.iter().map(Session::canonical).collect();
        r
    }

    /// Structural problems with the record itself; empty for any run this
    /// module produced.
    pub fn integrity_problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut sets: Vec<&CandidateSet> = self.step_sets.iter().map(|s| &s.set).collect();
        sets.push(&self.final_set);
        sets.extend(self.covariate_set.iter());
        sets.extend(self.contrast_set.iter());
        for set in sets {
            if !set.session_id.is_empty() && self.session(&set.session_id).is_none() {
                out.push(format!("set refers to unknown session {}", set.session_id));
            }
            for item in &set.items {
                if let Some(p) = &item.provenance {
                    if self.resolve(&p.session_id, p.message_index).is_none() {
                        out.push(format!(
                            "{} points at missing message {}#{}",
                            item.name, p.session_id, p.message_index
                        ));
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid query: {}", join_violations(.0))]
    Validation(Vec<Violation>),
    #[error("flow {flow} needs a {expected} query, got {found}")]
    WrongDesign {
        flow: FlowKind,
        expected: Design,
        found: Design,
    },
    #[error("flow {0} does not start a run")]
    NotDiscoveryFlow(FlowKind),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("{at} ({template}) yielded no candidates: {message}")]
    EmptyParse {
        at: String,
        template: TemplateId,
        message: String,
    },
    #[error("covariate curation pending: edit {} and run again", .path.display())]
    CurationPending { path: PathBuf },
    #[error("cannot use curation file {}: {message}", .path.display())]
    Curation { path: PathBuf, message: String },
    #[error("runs do not share one query (content hash {first} vs {other})")]
    MixedQuery { first: String, other: String },
    #[error("runs do not share one flow ({first} vs {other})")]
    MixedFlow { first: FlowKind, other: FlowKind },
    #[error("no runs to aggregate")]
    NoRuns,
    #[error("run {run_id} has no session {session_id}")]
    MissingSession { run_id: String, session_id: String },
    #[error("run {0} has no final candidate set")]
    MissingFinalSet(String),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

impl PipelineError {
    /// Errors caused by the caller's input rather than the backend.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            PipelineError::Validation(_)
                | PipelineError::WrongDesign { .. }
                | PipelineError::NotDiscoveryFlow(_)
                | PipelineError::Prompt(_)
                | PipelineError::Curation { .. }
                | PipelineError::MixedQuery { .. }
                | PipelineError::MixedFlow { .. }
                | PipelineError::NoRuns
                | PipelineError::MissingSession { .. }
                | PipelineError::MissingFinalSet(_)
        )
    }
}

pub(crate) fn step_label(step: usize) -> String {
    format!("step {step}")
}

/// Check the query against the flow before any backend call.
pub fn check_query(q: &CausalQuery, flow: FlowKind) -> Result<(), PipelineError> {
    let expected = flow.design().ok_or(PipelineError::NotDiscoveryFlow(flow))?;
    if q.design != expected {
        return Err(PipelineError::WrongDesign {
            flow,
            expected,
            found: q.design,
        });
    }
    let mut violations = validate_query(q);
    if expected == Design::Iv && q.confounders.as_deref().map_or(true, |c| c.trim().is_empty()) {
        let v = Violation {
            field: "confounders".into(),
            rule: crate::causal_model::Rule::RequiredForDesign,
        };
        if !violations.contains(&v) {
            violations.push(v);
        }
    }
    if flow == FlowKind::IvJointCovariateSearch && q.budgets.l0.is_none() {
        violations.push(Violation {
            field: "budgets.l0".into(),
            rule: crate::causal_model::Rule::RequiredForDesign,
        });
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(PipelineError::Validation(violations))
    }
}

/// Flow to use for a query when the caller does not pick one.
pub fn default_flow(q: &CausalQuery) -> FlowKind {
    match q.design {
        Design::Iv if q.effective_covariates().is_some() => FlowKind::IvTwoStepWithCovariates,
        Design::Iv => FlowKind::IvTwoStep,
        Design::ConditionalIndependence => FlowKind::CiSearch,
        Design::DiffInDiff => FlowKind::DidSearch,
        Design::RegressionDiscontinuity => FlowKind::RddSearch,
    }
}

/// Run any discovery flow.
pub fn run_flow(
    gw: &Gateway,
    q: &CausalQuery,
    flow: FlowKind,
    opts: &PipelineOptions,
) -> Result<DiscoveryRun, PipelineError> {
    match flow {
        FlowKind::IvTwoStep | FlowKind::IvTwoStepWithCovariates => run_iv_two_step(gw, q, opts),
        FlowKind::IvThreeStep => run_iv_three_step(gw, q, opts),
        FlowKind::IvJointCovariateSearch => run_iv_joint_covariates(gw, q, opts),
        FlowKind::CiSearch => run_ci_search(gw, q, opts),
        FlowKind::DidSearch => run_did_search(gw, q, opts),
        FlowKind::RddSearch => run_rdd_search(gw, q, opts),
        FlowKind::AdversarialRound => Err(PipelineError::NotDiscoveryFlow(flow)),
    }
}

/// Run `count` independent copies of a flow, at most `parallelism` at a time.
///
/// Run `i` (1-based) uses the session namespace `<gateway namespace>-r<i>`,
/// so a replay with the same base namespace reproduces every session id.
pub fn run_many(
    gw: &Gateway,
    q: &CausalQuery,
    flow: FlowKind,
    opts: &PipelineOptions,
    count: usize,
    parallelism: usize,
) -> Vec<Result<DiscoveryRun, PipelineError>> {
    let workers = parallelism.clamp(1, count.max(1));
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<DiscoveryRun, PipelineError>>>> =
        Mutex::new((0..count).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= count {
                    break;
                }
                let scoped = gw.scoped(format!("{}-r{}", gw.namespace(), i + 1));
                let out = run_flow(&scoped, q, flow, opts);
                results.lock().expect("results lock")[i] = Some(out);
            });
        }
    });
    results
        .into_inner()
        .expect("results lock")
        .into_iter()
        .map(|r| r.expect("every index was claimed"))
        .collect()
}

/// Mutable state threaded through one flow execution.
pub(crate) struct RunCtx<'a> {
    pub gw: &'a Gateway,
    pub q: &'a CausalQuery,
    pub opts: &'a PipelineOptions,
    pub run: DiscoveryRun,
    started: Instant,
}

impl<'a> RunCtx<'a> {
    pub fn start(
        gw: &'a Gateway,
        q: &'a CausalQuery,
        opts: &'a PipelineOptions,
        flow: FlowKind,
    ) -> Result<Self, PipelineError> {
        check_query(q, flow)?;
        tracing::info!(run_id = gw.namespace(), %flow, "starting run");
        Ok(RunCtx {
            gw,
            q,
            opts,
            run: DiscoveryRun {
                run_id: gw.namespace().to_string(),
                query: q.clone(),
                flow,
                options: opts.clone(),
                model: ModelSummary {
                    model: gw.config().model.clone(),
                    temperature: gw.config().temperature,
                },
                sessions: Vec::new(),
                step_sets: Vec::new(),
                subset_reports: Vec::new(),
                final_set: CandidateSet::new(Vec::new()),
                covariate_set: None,
                contrast_set: None,
                explanations: Vec::new(),
                probes: Vec::new(),
                adversary_material: None,
                flags: Vec::new(),
                warnings: Vec::new(),
                notes: Vec::new(),
                created_at: Utc::now(),
                elapsed_ms: 0,
            },
            started: Instant::now(),
        })
    }

    pub fn render_options(&self) -> RenderOptions {
        RenderOptions {
            number_style: self.opts.number_style,
            choose_all: false,
            contrast: false,
            hard_to_quantify: self.opts.hard_to_quantify,
            category_split: self.q.category_split.clone().unwrap_or_default(),
            format_instruction: self.opts.format_instruction.clone(),
        }
    }

    pub fn render(
        &self,
        id: TemplateId,
        extra: &[(&str, String)],
        ro: &RenderOptions,
    ) -> Result<RenderedPrompt, PipelineError> {
        self.render_for(self.q, id, extra, ro)
    }

    pub fn render_for(
        &self,
        q: &CausalQuery,
        id: TemplateId,
        extra: &[(&str, String)],
        ro: &RenderOptions,
    ) -> Result<RenderedPrompt, PipelineError> {
        let extra: BTreeMap<String, String> =
            extra.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
        Ok(render_with(id, q, &extra, ro)?)
    }

    /// Send a prompt; returns the reply text and its message index.
    pub fn ask(
        &self,
        session: &mut Session,
        prompt: &RenderedPrompt,
    ) -> Result<(String, usize), PipelineError> {
        let reply = self.gw.chat(session, prompt)?;
        Ok((reply.content, session.len() - 1))
    }

    pub fn expectations(
        &self,
        origin: OriginStep,
        max_items: Option<u32>,
        tags: &[AssumptionTag],
    ) -> ParseExpectations {
        let cats = self.q.category_split.clone().unwrap_or_default();
        ParseExpectations::origin(origin)
            .with_max_items(max_items)
            .with_categories(&cats)
            .with_tags(tags)
    }

    /// Parse one step's reply text and record it as the next step.
    ///
    /// With `required`, an empty parse aborts the run; otherwise the step is
    /// recorded as an empty set with a note.
    pub fn parse_step(
        &mut self,
        template: TemplateId,
        text: &str,
        at: (&str, usize),
        exp: &ParseExpectations,
        required: bool,
    ) -> Result<CandidateSet, PipelineError> {
        let step = self.run.step_sets.len() + 1;
        let set = self.parse_text(&step_label(step), template, text, at, exp, required)?;
        self.record_step(template, set.clone());
        Ok(set)
    }

    pub fn record_step(&mut self, template: TemplateId, set: CandidateSet) -> usize {
        let step = self.run.step_sets.len() + 1;
        self.run.step_sets.push(StepRecord { step, template, set });
        step
    }

    /// Parse reply text without recording a step.
    pub fn parse_text(
        &mut self,
        label: &str,
        template: TemplateId,
        text: &str,
        (session_id, index): (&str, usize),
        exp: &ParseExpectations,
        required: bool,
    ) -> Result<CandidateSet, PipelineError> {
        match parse_candidates(&ChatMessage::assistant(text), exp) {
            Ok(parsed) => {
                for w in parsed.warnings {
                    if let ParseWarning::CountBelowBudget { expected, found } = &w {
                        self.run.flags.push(RunFlag::CountBelowBudget {
                            at: label.to_string(),
                            expected: *expected,
                            found: *found,
                        });
                    }
                    self.run.warnings.push(StepWarning {
                        at: label.to_string(),
                        warning: w,
                    });
                }
                Ok(parsed.set.with_provenance(session_id, index))
            }
            Err(e) if required => Err(PipelineError::EmptyParse {
                at: label.to_string(),
                template,
                message: e.to_string(),
            }),
            Err(e) => {
                tracing::warn!(at = label, error = %e, "step produced no candidates");
                self.run.notes.push(format!("{label} ({template}) produced no candidates: {e}"));
                let mut empty = CandidateSet::new(Vec::new()).with_provenance(session_id, index);
                empty.step_tag = exp.step_tag.clone();
                Ok(empty)
            }
        }
    }

    /// Compare two recorded steps and flag contract breaches.
    pub fn check_subset(&mut self, from: usize, to: usize) {
        let initial = self.run.step_sets[from - 1].set.clone();
        let refined = self.run.step_sets[to - 1].set.clone();
        self.check_sets(&step_label(from), &initial, &step_label(to), &refined);
    }

    pub fn check_sets(&mut self, from: &str, initial: &CandidateSet, to: &str, refined: &CandidateSet) {
        let report = match_subset(refined, initial, self.opts.rename_threshold);
        self.run.flags.extend(flags_for(to, &report));
        self.run.subset_reports.push(StepSubsetReport {
            from: from.to_string(),
            to: to.to_string(),
            report,
        });
    }

    pub fn finish(mut self, sessions: Vec<Session>, final_set: CandidateSet) -> DiscoveryRun {
        self.run.sessions = sessions;
        self.run.final_set = final_set;
        self.run.elapsed_ms = self.started.elapsed().as_millis() as u64;
        tracing::info!(
            run_id = %self.run.run_id,
            items = self.run.final_set.len(),
            flags = self.run.flags.len(),
            "run finished"
        );
        self.run
    }
}

pub(crate) fn flags_for(at: &str, report: &SubsetReport) -> Vec<RunFlag> {
    let mut out = Vec::new();
    if !report.injected.is_empty() {
        out.push(RunFlag::InjectedItems {
            at: at.to_string(),
            names: report.injected.iter().map(|m| m.name.clone()).collect(),
        });
    }
    if !report.renamed.is_empty() {
        out.push(RunFlag::RenamedItems {
            at: at.to_string(),
            pairs: report
                .renamed
                .iter()
                .map(|r| (r.name.clone(), r.likely_source.clone()))
                .collect(),
        });
    }
    out
}
