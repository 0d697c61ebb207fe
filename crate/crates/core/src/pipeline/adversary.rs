use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::extraction::{
    match_subset, parse_candidates, CandidateSet, CandidateVariable, OriginStep, ParseExpectations,
    ParseWarning, SubsetReport,
};
use crate::gateway::{ChatMessage, Gateway};
use crate::prompt::{render_with, RenderOptions, TemplateId};

use super::{flags_for, DiscoveryRun, ModelSummary, PipelineError, RunFlag, StepSubsetReport, StepWarning};

/// The critic's argument against one candidate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Critique {
    pub ordinal: u32,
    pub candidate: String,
    /// Empty when the critic's reply had nothing recognizable for this candidate.
    pub argument: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversaryMaterial {
    /// Model settings of the critic, which may differ from the defender's.
    pub critic_model: ModelSummary,
    pub critic_session_id: String,
    pub defender_session_id: String,
    /// The critic's reply as sent back to the defender.
    pub critique_text: String,
    pub critiques: Vec<Critique>,
    pub revised_set: CandidateSet,
    pub pre_adversary_set: CandidateSet,
    pub subset_report: SubsetReport,
    pub pessimistic_rejection: bool,
}

/// Have a critic argue against the run's answer, then let the defender revise.
///
/// The critic works in a fresh session (on `critic` when given, else on the
/// defender's gateway) whose ids are namespaced under the run id. The
/// defender's reply is appended to the session that produced the answer. An
/// empty revision keeps the previous answer and raises
/// [`RunFlag::PessimisticRejection`].
pub fn run_adversarial_round(
    defender: &Gateway,
    critic: Option<&Gateway>,
    run: &DiscoveryRun,
) -> Result<DiscoveryRun, PipelineError> {
    let started = Instant::now();
    let pre = run.final_set.clone();
    if pre.is_empty() {
        return Err(PipelineError::MissingFinalSet(run.run_id.clone()));
    }
    let mut defender_session = run
        .session(&pre.session_id)
        .cloned()
        .ok_or_else(|| PipelineError::MissingSession {
            run_id: run.run_id.clone(),
            session_id: pre.session_id.clone(),
        })?;
    let mut out = run.clone();

    let round = run
        .sessions
        .iter()
        .filter(|s| s.session_id().starts_with(&format!("{}-adv", run.run_id)))
        .count()
        + 1;
    let critic_gw = critic
        .unwrap_or(defender)
        .scoped(format!("{}-adv{}", run.run_id, round));
    tracing::info!(run_id = %run.run_id, round, "adversarial round");

    let plain = RenderOptions::default();
    let mut extra = BTreeMap::new();
    extra.insert("defender_list".to_string(), pre.to_prompt_list());
    let ad1 = render_with(TemplateId::AD1, &run.query, &extra, &plain)?;
    let mut critic_session = critic_gw.create_session(None);
    let critique_text = critic_gw.chat(&mut critic_session, &ad1)?.content;
    let critiques = attach_critiques(&pre, &critique_text);
    if critiques.iter().all(|c| c.argument.is_empty()) {
        out.notes
            .push("critic reply could not be matched to individual candidates".into());
    }

    let mut extra = BTreeMap::new();
    extra.insert("adversary_arguments".to_string(), critique_text.trim().to_string());
    let p3 = render_with(TemplateId::P3, &run.query, &extra, &plain)?;
    let revision = defender.chat(&mut defender_session, &p3)?;
    let revision_index = defender_session.len() - 1;

    let cats = run.query.category_split.clone().unwrap_or_default();
    let exp = ParseExpectations::origin(OriginStep::AdversaryRevised).with_categories(&cats);
    let revised = match parse_candidates(&revision, &exp) {
        Ok(parsed) => {
            for w in parsed.warnings {
                if !matches!(w, ParseWarning::CountBelowBudget { .. }) {
                    out.warnings.push(StepWarning {
                        at: "adversary".into(),
                        warning: w,
                    });
                }
            }
            let mut set = parsed.set.with_provenance(defender_session.session_id(), revision_index);
            set.step_tag = pre.step_tag.clone();
            set
        }
        Err(e) => {
            tracing::warn!(error = %e, "defender revision produced no candidates");
            let mut set = CandidateSet::new(Vec::new())
                .with_provenance(defender_session.session_id(), revision_index);
            set.step_tag = pre.step_tag.clone();
            set
        }
    };

    let report = match_subset(&revised, &pre, run.options.rename_threshold);
    let pessimistic = revised.is_empty();
    if pessimistic {
        out.flags.push(RunFlag::PessimisticRejection);
        out.notes
            .push("defender rejected every candidate; the pre-adversary answer is kept".into());
    } else {
        out.flags.extend(flags_for("adversary", &report));
        out.final_set = revised.clone();
    }
    out.subset_reports.push(StepSubsetReport {
        from: "final".into(),
        to: "adversary".into(),
        report: report.clone(),
    });

    if let Some(slot) = out
        .sessions
        .iter_mut()
        .find(|s| s.session_id() == defender_session.session_id())
    {
        *slot = defender_session.clone();
    }
    out.sessions.push(critic_session.clone());
    out.adversary_material = Some(AdversaryMaterial {
        critic_model: ModelSummary {
            model: critic_gw.config().model.clone(),
            temperature: critic_gw.config().temperature,
        },
        critic_session_id: critic_session.session_id().to_string(),
        defender_session_id: defender_session.session_id().to_string(),
        critique_text,
        critiques,
        revised_set: revised,
        pre_adversary_set: pre,
        subset_report: report,
        pessimistic_rejection: pessimistic,
    });
    out.elapsed_ms += started.elapsed().as_millis() as u64;
    Ok(out)
}

/// Pair each candidate with the critic's item for it: same name first, then
/// same ordinal, then same position.
fn attach_critiques(pre: &CandidateSet, reply: &str) -> Vec<Critique> {
    let items: Vec<CandidateVariable> =
        parse_candidates(&ChatMessage::assistant(reply), &ParseExpectations::default())
            .map(|p| p.set.items)
            .unwrap_or_default();
    pre.items
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let key = c.key();
            let hit = items
                .iter()
                .find(|it| it.key() == key)
                .or_else(|| items.iter().find(|it| it.ordinal == c.ordinal))
                .or_else(|| items.get(i));
            Critique {
                ordinal: c.ordinal,
                candidate: c.name.clone(),
                argument: hit.map(argument_text).unwrap_or_default(),
            }
        })
        .collect()
}

fn argument_text(item: &CandidateVariable) -> String {
    if item.rationale.is_empty() {
        item.name.clone()
    } else {
        item.rationale.clone()
    }
}
