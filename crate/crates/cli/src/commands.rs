use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::Utc;
use ivscout::artifacts::{self, Invocation};
use ivscout::causal_model::Design;
use ivscout::pipeline::{
    aggregate, check_query, run_adversarial_round, run_flow, run_many, AggregateMode,
    DiscoveryRun, FlowKind, ModelSummary, PipelineError, PipelineOptions, CURATION_FILE,
};
use ivscout::prompt::{
    diff_words, list_templates, render_fixture, render_with, template, NumberStyle, RenderOptions,
    TemplateId,
};
use ivscout::report::{Report, ReportFormat};

use crate::args::{
    AdversaryArgs, AggregateArgs, DesignArg, DiscoverArgs, FlowArg, RenderArgs, ReplayArgs,
    ReportArgs, TemplatesCommand,
};
use crate::error::CliError;
use crate::setup::{build_query, model_config, run_store, sanitize_id, Source};

fn flow_for(design: DesignArg, flow: Option<FlowArg>, has_covariates: bool) -> Result<FlowKind, CliError> {
    match (design, flow) {
        (DesignArg::Iv, None | Some(FlowArg::TwoStep)) if has_covariates => {
            Ok(FlowKind::IvTwoStepWithCovariates)
        }
        (DesignArg::Iv, None | Some(FlowArg::TwoStep)) => Ok(FlowKind::IvTwoStep),
        (DesignArg::Iv, Some(FlowArg::ThreeStep)) => Ok(FlowKind::IvThreeStep),
        (DesignArg::Iv, Some(FlowArg::Joint)) => Ok(FlowKind::IvJointCovariateSearch),
        (_, Some(_)) => Err(CliError::invalid(
            "invocation",
            "--flow only applies to `discover iv`",
        )),
        (DesignArg::Ci, None) => Ok(FlowKind::CiSearch),
        (DesignArg::Did, None) => Ok(FlowKind::DidSearch),
        (DesignArg::Rdd, None) => Ok(FlowKind::RddSearch),
    }
}

fn pipeline_options(a: &DiscoverArgs, out: &Path) -> PipelineOptions {
    let defaults = PipelineOptions::default();
    PipelineOptions {
        number_style: if a.words {
            NumberStyle::Words
        } else {
            NumberStyle::Digits
        },
        hard_to_quantify: a.hard_to_quantify,
        contrast: a.contrast,
        explain_exclusions: a.explain_exclusion.clone(),
        probe_sources: a.probe_sources,
        separate_sessions: a.separate_sessions,
        format_instruction: a.format_instruction.clone(),
        did_emphasis: !a.no_did_emphasis,
        rdd_refine: a.rdd_refine,
        curation_file: a.curate.then(|| out.join(CURATION_FILE)),
        rename_threshold: a.rename_threshold.unwrap_or(defaults.rename_threshold),
    }
}

fn summary(run: &DiscoveryRun, dir: &Path) {
    say!(
        "run {}: {} {} -> {}",
        run.run_id,
        run.final_set.len(),
        run.flow.variable_label().to_lowercase(),
        dir.join(artifacts::report_file(ReportFormat::Markdown)).display()
    );
    for flag in &run.flags {
        say!("  flag: {flag}");
    }
}

fn strict_check<'a>(runs: impl IntoIterator<Item = &'a DiscoveryRun>) -> Result<(), CliError> {
    let broken: Vec<String> = runs
        .into_iter()
        .flat_map(|r| {
            r.flags
                .iter()
                .filter(|f| f.is_contract_violation())
                .map(move |f| format!("{}: {f}", r.run_id))
        })
        .collect();
    if broken.is_empty() {
        Ok(())
    } else {
        Err(CliError::contract(broken.join("; ")))
    }
}

fn curation_pending(path: &Path) -> u8 {
    say!(
        "curation pending: edit {} (one characteristic per line) and run the same command again",
        path.display()
    );
    0
}

pub fn discover(a: &DiscoverArgs) -> Result<u8, CliError> {
    let design: Design = a.design.into();
    let q = build_query(design, &a.query)?;
    let flow = flow_for(a.design, a.flow, q.effective_covariates().is_some())?;
    check_query(&q, flow)?;
    if a.curate && flow != FlowKind::IvJointCovariateSearch {
        return Err(CliError::invalid("invocation", "--curate needs `--flow joint`"));
    }
    if a.sessions == 0 {
        return Err(CliError::invalid("invocation", "--sessions must be at least 1"));
    }
    if a.aggregate.is_some() && a.sessions < 2 {
        return Err(CliError::invalid("invocation", "--aggregate needs --sessions 2 or more"));
    }

    let run_id = match (&a.run_id, &a.out) {
        (Some(id), _) => sanitize_id(id),
        (None, Some(out)) => sanitize_id(&out.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()),
        (None, None) => format!("run-{}", Utc::now().format("%Y%m%d-%H%M%S")),
    };
    let out = a.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(&run_id));
    let opts = pipeline_options(a, &out);
    let source = Source::open(&a.backend, &artifacts::transcripts_dir(&out))?;
    let gw = source.gateway(model_config(&a.model, a.temperature), &run_id);
    let critic = a
        .critic_model
        .as_ref()
        .map(|m| source.gateway(model_config(m, a.temperature), &run_id));

    fs::create_dir_all(&out).map_err(|e| CliError::invalid("io", format!("{}: {e}", out.display())))?;
    artifacts::save_invocation(
        &out,
        &Invocation {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            mode: source.mode,
            flow,
            model: ModelSummary {
                model: a.model.clone(),
                temperature: a.temperature,
            },
            options: opts.clone(),
            runs: a.sessions,
            adversary: a.adversary,
            adversary_model: a.critic_model.as_ref().map(|m| ModelSummary {
                model: m.clone(),
                temperature: a.temperature,
            }),
            mock_script: a
                .backend
                .mock_script
                .as_ref()
                .and_then(|p| p.file_name())
                .map(|n| n.to_string_lossy().into_owned()),
            created_at: Utc::now(),
        },
    )?;

    let finish = |run: DiscoveryRun| -> Result<DiscoveryRun, PipelineError> {
        if a.adversary {
            run_adversarial_round(&gw, critic.as_ref(), &run)
        } else {
            Ok(run)
        }
    };

    if a.sessions == 1 {
        let run = match run_flow(&gw, &q, flow, &opts) {
            Err(PipelineError::CurationPending { path }) => return Ok(curation_pending(&path)),
            other => finish(other?)?,
        };
        artifacts::save_run(&out, &run)?;
        summary(&run, &out);
        if a.strict {
            strict_check([&run])?;
        }
        return Ok(0);
    }

    let mut runs = Vec::new();
    let mut first_error: Option<CliError> = None;
    for result in run_many(&gw, &q, flow, &opts, a.sessions, a.parallelism) {
        match result.and_then(&finish) {
            Ok(run) => {
                let dir = out.join(&run.run_id);
                artifacts::save_run(&dir, &run)?;
                summary(&run, &dir);
                runs.push(run);
            }
            Err(PipelineError::CurationPending { path }) => return Ok(curation_pending(&path)),
            Err(e) => {
                let e = CliError::from(e);
                eprintln!("{e}");
                first_error.get_or_insert(e);
            }
        }
    }
    if let (Some(mode), false) = (a.aggregate, runs.is_empty()) {
        let mode: AggregateMode = mode.into();
        let agg = aggregate(&runs, mode, format!("{run_id}-{mode}"))?;
        let dir = out.join("aggregate");
        artifacts::save_aggregate(&dir, &agg)?;
        say!(
            "aggregate {}: {} variables over {} runs -> {}",
            agg.aggregate_id,
            agg.set.len(),
            agg.run_ids.len(),
            dir.join(artifacts::report_file(ReportFormat::Markdown)).display()
        );
    }
    if let Some(e) = first_error {
        return Err(e);
    }
    if a.strict {
        strict_check(&runs)?;
    }
    Ok(0)
}

pub fn adversary(a: &AdversaryArgs) -> Result<u8, CliError> {
    let run = artifacts::load_run(&a.run)?;
    let source = Source::open(&a.backend, &run_store(&a.run))?;
    let defender = source.gateway(model_config(&run.model.model, run.model.temperature), &run.run_id);
    let critic = (a.critic_model.is_some() || a.critic_temperature.is_some()).then(|| {
        let model = a.critic_model.as_deref().unwrap_or(&run.model.model);
        let temperature = a.critic_temperature.or(run.model.temperature);
        source.gateway(model_config(model, temperature), &run.run_id)
    });
    let revised = run_adversarial_round(&defender, critic.as_ref(), &run)?;
    artifacts::save_run(&a.run, &revised)?;
    if let Some(mut inv) = artifacts::load_invocation(&a.run)? {
        inv.adversary = true;
        inv.adversary_model = revised.adversary_material.as_ref().map(|m| m.critic_model.clone());
        artifacts::save_invocation(&a.run, &inv)?;
    }
    summary(&revised, &a.run);
    if a.strict {
        let mut added = revised.clone();
        added.flags.drain(..run.flags.len().min(added.flags.len()));
        strict_check([&added])?;
    }
    Ok(0)
}

pub fn aggregate_cmd(a: &AggregateArgs) -> Result<u8, CliError> {
    let runs = a
        .runs
        .iter()
        .map(|dir| artifacts::load_run(dir))
        .collect::<Result<Vec<_>, _>>()?;
    let mode: AggregateMode = a.mode.into();
    let id = a
        .id
        .as_deref()
        .map(sanitize_id)
        .unwrap_or_else(|| format!("aggregate-{mode}"));
    let agg = aggregate(&runs, mode, id)?;
    if let Some(out) = &a.out {
        artifacts::save_aggregate(out, &agg)?;
        eprintln!("wrote {}", out.join(artifacts::AGGREGATE_FILE).display());
    }
    say_raw!("{}", Report::from_aggregate(&agg).to_markdown());
    Ok(0)
}

pub fn report(a: &ReportArgs) -> Result<u8, CliError> {
    let report = if artifacts::is_run_dir(&a.dir) {
        Report::from_run(&artifacts::load_run(&a.dir)?)
    } else if artifacts::is_aggregate_dir(&a.dir) {
        Report::from_aggregate(&artifacts::load_aggregate(&a.dir)?)
    } else {
        return Err(CliError::invalid(
            "artifact",
            format!("{} holds neither a run nor an aggregate", a.dir.display()),
        ));
    };
    let text = report.render(a.format.into());
    match &a.output {
        Some(path) => fs::write(path, text)
            .map_err(|e| CliError::invalid("io", format!("{}: {e}", path.display())))?,
        None => say_raw!("{text}"),
    }
    Ok(0)
}

fn render_options(r: &RenderArgs, query_categories: Option<&Vec<String>>) -> RenderOptions {
    RenderOptions {
        number_style: if r.words {
            NumberStyle::Words
        } else {
            NumberStyle::Digits
        },
        choose_all: r.choose_all,
        contrast: r.contrast,
        hard_to_quantify: r.hard_to_quantify,
        category_split: if r.categories.is_empty() {
            query_categories.cloned().unwrap_or_default()
        } else {
            r.categories.clone()
        },
        format_instruction: r.format_instruction.clone(),
    }
}

fn render_text(id: TemplateId, r: &RenderArgs) -> Result<String, CliError> {
    let q = artifacts::load_query(&r.query)?;
    let mut extra = BTreeMap::new();
    for pair in &r.set {
        let (k, v) = pair.split_once('=').ok_or_else(|| {
            CliError::invalid("invocation", format!("--set expects SLOT=VALUE, got `{pair}`"))
        })?;
        extra.insert(k.trim().to_string(), v.to_string());
    }
    let opts = render_options(r, q.category_split.as_ref());
    Ok(render_with(id, &q, &extra, &opts)?.text)
}

pub fn templates(cmd: &TemplatesCommand) -> Result<u8, CliError> {
    match cmd {
        TemplatesCommand::List => {
            for t in list_templates() {
                let slots: Vec<&str> = t.slots.iter().map(String::as_str).collect();
                say!("{:<15} {:<7} {}", t.id.as_str(), format!("{:?}", t.step_role).to_lowercase(), slots.join(", "));
            }
        }
        TemplatesCommand::Show { id } => say!("{}", template(id.parse()?).body),
        TemplatesCommand::Render { template, id, render } => {
            let id = template.as_ref().or(id.as_ref()).expect("clap requires one of them");
            say!("{}", render_text(id.parse()?, render)?)
        }
        TemplatesCommand::Export { output } => {
            let json = serde_json::to_string_pretty(&list_templates())
                .map_err(|e| CliError::invalid("template", e.to_string()))?;
            match output {
                Some(path) => fs::write(path, json + "\n")
                    .map_err(|e| CliError::invalid("io", format!("{}: {e}", path.display())))?,
                None => say!("{json}"),
            }
        }
        TemplatesCommand::Fixtures { id: None } => {
            for id in ivscout::prompt::fixture_ids() {
                say!("{:<10} {}", id, render_fixture(id)?.template_id);
            }
        }
        TemplatesCommand::Fixtures { id: Some(id) } => say_raw!("{}", render_fixture(id)?.text),
        TemplatesCommand::Diff { fixture, render } => {
            let stored = render_fixture(fixture)?;
            let rendered = render_text(stored.template_id, render)?;
            if rendered == stored.text {
                say!("identical");
            } else {
                say!("{}", diff_words(&stored.text, &rendered));
            }
        }
    }
    Ok(0)
}

pub fn replay(a: &ReplayArgs) -> Result<u8, CliError> {
    let run = artifacts::load_run(&a.run)?;
    let store = a.transcripts.clone().unwrap_or_else(|| run_store(&a.run));
    let source = Source::replay(&store)?;
    let gw = source.gateway(model_config(&run.model.model, run.model.temperature), &run.run_id);

    let mut opts = run.options.clone();
    if let Some(path) = &opts.curation_file {
        let beside = a.run.join(CURATION_FILE);
        if !path.is_file() && beside.is_file() {
            opts.curation_file = Some(beside);
        }
    }
    let mut replayed = run_flow(&gw, &run.query, run.flow, &opts)?;
    replayed.options = run.options.clone();
    let rounds = run
        .sessions
        .iter()
        .filter(|s| s.session_id().starts_with(&format!("{}-adv", run.run_id)))
        .count();
    if let Some(m) = &run.adversary_material {
        let critic = source.gateway(model_config(&m.critic_model.model, m.critic_model.temperature), &run.run_id);
        for _ in 0..rounds {
            replayed = run_adversarial_round(&gw, Some(&critic), &replayed)?;
        }
    }

    if let Some(out) = &a.out {
        artifacts::save_run(out, &replayed)?;
    }
    let (want, got) = (run.canonical(), replayed.canonical());
    let mut diverged = Vec::new();
    let jsonl = |r: &DiscoveryRun| r.sessions.iter().map(|s| s.to_jsonl()).collect::<String>();
    if jsonl(&want) != jsonl(&got) {
        diverged.push("sessions");
    }
    if Report::from_run(&want).to_markdown() != Report::from_run(&got).to_markdown() {
        diverged.push("report");
    }
    if diverged.is_empty() && want != got {
        diverged.push("run record");
    }
    if !diverged.is_empty() {
        return Err(CliError::backend(
            "replay-diverged",
            format!("replay of {} differs from the recorded run in: {}", run.run_id, diverged.join(", ")),
        ));
    }
    say!(
        "replay of {} matches the recorded run ({} sessions, {} variables)",
        run.run_id,
        replayed.sessions.len(),
        replayed.final_set.len()
    );
    Ok(0)
}
