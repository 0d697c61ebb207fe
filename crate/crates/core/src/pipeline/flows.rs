use std::path::Path;

use crate::causal_model::{AssumptionTag, CausalQuery, Covariates};
use crate::extraction::{
    normalize_name, split_at_heading, split_at_restart, CandidateSet, OriginStep, ParseExpectations,
};
use crate::gateway::{Gateway, Session};
use crate::prompt::{did_outcome, TemplateId};

use super::{step_label, DiscoveryRun, Explanation, FlowKind, PipelineError, PipelineOptions, ProbeRecord, RunCtx};

use AssumptionTag::{CI, EX, IND, PT, RD, REL, REL2};

/// Suggested name for the joint flow's curation file inside a run directory.
pub const CURATION_FILE: &str = "covariates_curation.txt";

/// Two-step IV search: list factors, then keep those unlikely to share
/// confounders with the outcome. Uses the covariate form of the refinement
/// prompt when the query carries covariates.
pub fn run_iv_two_step(
    gw: &Gateway,
    q: &CausalQuery,
    opts: &PipelineOptions,
) -> Result<DiscoveryRun, PipelineError> {
    let with_cov = q.effective_covariates().is_some();
    let flow = if with_cov {
        FlowKind::IvTwoStepWithCovariates
    } else {
        FlowKind::IvTwoStep
    };
    let mut cx = RunCtx::start(gw, q, opts, flow)?;
    let ro = cx.render_options();
    let mut s = gw.create_session(None);
    let sid = s.session_id().to_string();

    let p1 = cx.render(TemplateId::P1, &[], &ro)?;
    let (text, idx) = cx.ask(&mut s, &p1)?;
    let exp = cx.expectations(OriginStep::Search, q.budgets.k0, &[REL, EX]);
    cx.parse_step(TemplateId::P1, &text, (&sid, idx), &exp, true)?;

    let refine = if with_cov { TemplateId::P2X } else { TemplateId::P2 };
    let refined = refine_step(&mut cx, q, &mut s, refine)?;
    cx.check_subset(1, 2);
    follow_ups(&mut cx, &mut s)?;
    Ok(cx.finish(vec![s], refined))
}

/// Three-step IV search under a role-play system message: relevance, then
/// exclusion, then independence.
pub fn run_iv_three_step(
    gw: &Gateway,
    q: &CausalQuery,
    opts: &PipelineOptions,
) -> Result<DiscoveryRun, PipelineError> {
    let mut cx = RunCtx::start(gw, q, opts, FlowKind::IvThreeStep)?;
    let ro = cx.render_options();
    let a0 = cx.render(TemplateId::A0, &[], &ro)?;
    let open = |cx: &RunCtx| -> Result<Session, PipelineError> {
        let mut s = cx.gw.create_session(Some(&a0));
        cx.gw.acknowledge(&mut s)?;
        Ok(s)
    };

    let mut sessions = Vec::new();
    let mut s = open(&cx)?;
    let a1 = cx.render(TemplateId::A1, &[], &ro)?;
    let (mut prev, idx) = cx.ask(&mut s, &a1)?;
    let exp = cx.expectations(OriginStep::Search, q.budgets.k0, &[REL]);
    let sid = s.session_id().to_string();
    cx.parse_step(TemplateId::A1, &prev, (&sid, idx), &exp, true)?;

    let mut ro3 = ro.clone();
    ro3.choose_all = q.budgets.k.is_none();
    let steps = [
        (TemplateId::A2, ro.clone(), None, EX),
        (TemplateId::A3, ro3, q.budgets.k, IND),
    ];
    let mut last = CandidateSet::new(Vec::new());
    for (id, opts_for_step, max, tag) in steps {
        let mut prompt = cx.render(id, &[], &opts_for_step)?;
        if cx.opts.separate_sessions {
            sessions.push(std::mem::replace(&mut s, open(&cx)?));
            prompt = prompt.with_context(&prev);
        }
        let (text, idx) = cx.ask(&mut s, &prompt)?;
        let sid = s.session_id().to_string();
        let exp = cx.expectations(OriginStep::Refine, max, &[tag]);
        last = cx.parse_step(id, &text, (&sid, idx), &exp, false)?;
        prev = text;
    }
    cx.check_subset(1, 2);
    cx.check_subset(2, 3);
    follow_ups(&mut cx, &mut s)?;
    sessions.push(s);
    Ok(cx.finish(sessions, last))
}

/// Joint IV and covariate search: one prompt lists both instruments and the
/// agent's own characteristics; the characteristics (optionally curated by
/// hand) then qualify the refinement prompt.
pub fn run_iv_joint_covariates(
    gw: &Gateway,
    q: &CausalQuery,
    opts: &PipelineOptions,
) -> Result<DiscoveryRun, PipelineError> {
    let mut cx = RunCtx::start(gw, q, opts, FlowKind::IvJointCovariateSearch)?;
    let ro = cx.render_options();
    let mut s = gw.create_session(None);
    let sid = s.session_id().to_string();

    let p1x = cx.render(TemplateId::P1X, &[], &ro)?;
    let (text, idx) = cx.ask(&mut s, &p1x)?;
    let (iv_text, cov_text) = match split_at_heading(&text, |h| {
        h.to_lowercase().contains("characteristic")
    }) {
        (first, Some(second)) => (first, Some(second)),
        _ => split_at_restart(&text),
    };
    let exp = cx.expectations(OriginStep::Search, q.budgets.k0, &[REL, EX]);
    cx.parse_step(TemplateId::P1X, &iv_text, (&sid, idx), &exp, true)?;

    let cov_exp = cx.expectations(OriginStep::Search, q.budgets.l0, &[REL2]);
    let cov_set = match cov_text {
        Some(t) => cx.parse_text("covariates", TemplateId::P1X, &t, (&sid, idx), &cov_exp, false)?,
        None => {
            cx.run
                .notes
                .push("no separate characteristics list found in the reply".into());
            let mut empty = CandidateSet::new(Vec::new()).with_provenance(&sid, idx);
            empty.step_tag = cov_exp.step_tag.clone();
            empty
        }
    };
    cx.run.covariate_set = Some(cov_set.clone());

    let mut selected: Vec<String> = cov_set.names().iter().map(|n| n.to_string()).collect();
    if let Some(path) = &opts.curation_file {
        if path.exists() {
            selected = read_curation(path)?;
            cx.run.notes.push(format!(
                "covariates curated by hand: {} of {} kept",
                selected.len(),
                cov_set.len()
            ));
        } else {
            write_curation(path, &cx.run.run_id, &selected)?;
            return Err(PipelineError::CurationPending { path: path.clone() });
        }
    }

    let covariates = if selected.is_empty() {
        let fallback = q
            .effective_covariates()
            .cloned()
            .unwrap_or_else(|| Covariates::loose(["characteristics"]));
        tracing::warn!("no covariates to bind; falling back to loose descriptors");
        cx.run.notes.push(format!(
            "no characteristics selected; refinement falls back to {}",
            crate::prompt::covariate_clause(&fallback)
        ));
        fallback
    } else {
        Covariates::loose(selected)
    };
    let q2 = q.clone().with_covariates(covariates);
    let refined = refine_step(&mut cx, &q2, &mut s, TemplateId::P2X)?;
    cx.check_subset(1, 2);
    follow_ups(&mut cx, &mut s)?;
    Ok(cx.finish(vec![s], refined))
}

/// Control search: list decision factors, then keep those that also
/// determine the outcome directly.
pub fn run_ci_search(
    gw: &Gateway,
    q: &CausalQuery,
    opts: &PipelineOptions,
) -> Result<DiscoveryRun, PipelineError> {
    let mut cx = RunCtx::start(gw, q, opts, FlowKind::CiSearch)?;
    let ro = cx.render_options();
    let mut s = gw.create_session(None);
    let sid = s.session_id().to_string();

    let c1 = cx.render(TemplateId::C1, &[], &ro)?;
    let (text, idx) = cx.ask(&mut s, &c1)?;
    let exp = cx.expectations(OriginStep::Search, q.budgets.l0, &[CI]);
    cx.parse_step(TemplateId::C1, &text, (&sid, idx), &exp, true)?;

    let c2 = cx.render(TemplateId::C2, &[], &ro)?;
    let (text, idx) = cx.ask(&mut s, &c2)?;
    let exp = cx.expectations(OriginStep::Refine, None, &[CI]);
    let controls = cx.parse_step(TemplateId::C2, &text, (&sid, idx), &exp, false)?;
    cx.check_subset(1, 2);
    follow_ups(&mut cx, &mut s)?;
    Ok(cx.finish(vec![s], controls))
}

/// Parallel-trends control search: the control prompt with the outcome
/// replaced by its temporal change, then an optional emphasis follow-up whose
/// picks are marked trend-only and listed first.
pub fn run_did_search(
    gw: &Gateway,
    q: &CausalQuery,
    opts: &PipelineOptions,
) -> Result<DiscoveryRun, PipelineError> {
    let mut cx = RunCtx::start(gw, q, opts, FlowKind::DidSearch)?;
    let ro = cx.render_options();
    let mut s = gw.create_session(None);
    let sid = s.session_id().to_string();
    let outcome_t = q.outcome_t.clone().unwrap_or_default();

    let c1 = cx.render(TemplateId::C1, &[], &ro)?;
    let (text, idx) = cx.ask(&mut s, &c1)?;
    let exp = cx.expectations(OriginStep::Search, q.budgets.l0, &[PT]);
    cx.parse_step(TemplateId::C1, &text, (&sid, idx), &exp, true)?;

    let changed = did_outcome(outcome_t.trim(), q.treatment.trim());
    let c2 = cx.render(TemplateId::C2, &[("outcome", changed)], &ro)?;
    let (text, idx) = cx.ask(&mut s, &c2)?;
    let exp = cx.expectations(OriginStep::Refine, None, &[PT]);
    let level = cx.parse_step(TemplateId::C2, &text, (&sid, idx), &exp, false)?;
    cx.check_subset(1, 2);

    let mut controls = level.clone();
    if opts.did_emphasis {
        let emph = cx.render(TemplateId::DidEmph, &[], &ro)?;
        let (text, idx) = cx.ask(&mut s, &emph)?;
        let mut trend = cx.parse_text(&step_label(3), TemplateId::DidEmph, &text, (&sid, idx), &exp, false)?;
        for item in &mut trend.items {
            item.trend_only = true;
        }
        cx.record_step(TemplateId::DidEmph, trend.clone());
        cx.check_subset(1, 3);

        let mut items = trend.items;
        for item in level.items {
            if !items.iter().any(|t| t.key() == item.key()) {
                items.push(item);
            }
        }
        controls.items = items;
        controls.renumber();
    }
    follow_ups(&mut cx, &mut s)?;
    Ok(cx.finish(vec![s], controls))
}

/// Running-variable search: eligibility criteria, then those with precise
/// cutoffs (with the cutoff values), then optionally those hard to
/// manipulate.
pub fn run_rdd_search(
    gw: &Gateway,
    q: &CausalQuery,
    opts: &PipelineOptions,
) -> Result<DiscoveryRun, PipelineError> {
    let mut cx = RunCtx::start(gw, q, opts, FlowKind::RddSearch)?;
    let ro = cx.render_options();
    let mut s = gw.create_session(None);
    let sid = s.session_id().to_string();

    let r1 = cx.render(TemplateId::R1, &[], &ro)?;
    let (text, idx) = cx.ask(&mut s, &r1)?;
    let exp = cx.expectations(OriginStep::Search, q.budgets.j0, &[RD]);
    cx.parse_step(TemplateId::R1, &text, (&sid, idx), &exp, true)?;

    let r2 = cx.render(TemplateId::R2, &[], &ro)?;
    let (text, idx) = cx.ask(&mut s, &r2)?;
    let exp = cx.expectations(OriginStep::RddRefined, None, &[RD]).with_cutoffs();
    let with_cutoffs = cx.parse_step(TemplateId::R2, &text, (&sid, idx), &exp, false)?;
    cx.check_subset(1, 2);

    let mut final_set = with_cutoffs.clone();
    if opts.rdd_refine {
        let r3 = cx.render(TemplateId::R3, &[], &ro)?;
        let (text, idx) = cx.ask(&mut s, &r3)?;
        let exp = cx.expectations(OriginStep::RddRefined, None, &[RD]);
        let mut robust = cx.parse_text(&step_label(3), TemplateId::R3, &text, (&sid, idx), &exp, false)?;
        for item in &mut robust.items {
            if item.cutoff.is_none() {
                item.cutoff = with_cutoffs
                    .items
                    .iter()
                    .find(|c| c.key() == item.key())
                    .and_then(|c| c.cutoff.clone());
            }
        }
        cx.record_step(TemplateId::R3, robust.clone());
        cx.check_subset(2, 3);
        final_set = robust;
    }
    follow_ups(&mut cx, &mut s)?;
    Ok(cx.finish(vec![s], final_set))
}

/// Send a refinement prompt and parse it, splitting off a contrast list when
/// one was requested.
fn refine_step(
    cx: &mut RunCtx,
    q: &CausalQuery,
    s: &mut Session,
    id: TemplateId,
) -> Result<CandidateSet, PipelineError> {
    let mut ro = cx.render_options();
    ro.choose_all = q.budgets.k.is_none();
    ro.contrast = cx.opts.contrast;
    let prompt = cx.render_for(q, id, &[], &ro)?;
    let (text, idx) = cx.ask(s, &prompt)?;
    let sid = s.session_id().to_string();
    let exp = cx.expectations(OriginStep::Refine, q.budgets.k, &[IND]);
    if !cx.opts.contrast {
        return cx.parse_step(id, &text, (&sid, idx), &exp, false);
    }
    let (main, contrast) = split_at_heading(&text, is_contrast_heading);
    let refined = cx.parse_step(id, &main, (&sid, idx), &exp, false)?;
    match contrast {
        Some(t) => {
            let plain = ParseExpectations {
                max_items: None,
                ..exp
            };
            let set = cx.parse_text("contrast", id, &t, (&sid, idx), &plain, false)?;
            cx.run.contrast_set = Some(set);
        }
        None => cx
            .run
            .notes
            .push("contrast requested but no separate contrast list was found".into()),
    }
    Ok(refined)
}

fn is_contrast_heading(h: &str) -> bool {
    let h = h.to_lowercase();
    h.contains("contrast") || (h.contains("associated") && !h.contains("unassociated"))
}

/// Exclusion explanations and the sources probe, in the final session.
fn follow_ups(cx: &mut RunCtx, s: &mut Session) -> Result<(), PipelineError> {
    let plain = crate::prompt::RenderOptions::default();
    for name in cx.opts.explain_exclusions.clone() {
        let prompt = cx.render(TemplateId::VExplainExcl, &[("excluded", name.clone())], &plain)?;
        let (text, idx) = cx.ask(s, &prompt)?;
        if cx.run.final_set_contains(&name) {
            cx.run
                .notes
                .push(format!("asked why \"{name}\" was excluded, but it was listed"));
        }
        cx.run.explanations.push(Explanation {
            excluded: name,
            text,
            session_id: s.session_id().to_string(),
            message_index: idx,
        });
    }
    if cx.opts.probe_sources {
        let reply = cx.gw.probe_sources(s)?;
        cx.run.probes.push(ProbeRecord {
            session_id: s.session_id().to_string(),
            message_index: s.len() - 1,
            text: reply.content,
        });
    }
    Ok(())
}

fn read_curation(path: &Path) -> Result<Vec<String>, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Curation {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}

fn write_curation(path: &Path, run_id: &str, names: &[String]) -> Result<(), PipelineError> {
    let mut body = format!(
        "# Covariates listed in run {run_id}.\n\
         # Delete the lines you do not want bound into the refinement prompt,\n\
         # then run the same command again.\n"
    );
    for n in names {
        body.push_str(n);
        body.push('\n');
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| PipelineError::Curation {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    }
    std::fs::write(path, body).map_err(|e| PipelineError::Curation {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

impl DiscoveryRun {
    fn final_set_contains(&self, name: &str) -> bool {
        let key = normalize_name(name);
        self.step_sets
            .last()
            .is_some_and(|s| s.set.contains_key(&key))
    }
}
