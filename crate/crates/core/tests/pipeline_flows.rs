mod common;

use std::sync::Arc;

use common::*;
use ivscout::causal_model::{CausalQuery, Design, Rule, SearchBudget};
use ivscout::extraction::ParseWarning;
use ivscout::gateway::{Gateway, Role, TranscriptStore};
use ivscout::pipeline::{
    aggregate_runs, run_adversarial_round, run_ci_search, run_did_search, run_flow,
    run_iv_joint_covariates, run_iv_three_step, run_iv_two_step, run_many, run_rdd_search,
    AggregateMode, FlowKind, PipelineError, PipelineOptions, RunFlag,
};
use ivscout::prompt::TemplateId;

fn iv_query() -> CausalQuery {
    CausalQuery::new(Design::Iv, "a student", "ohio", "college attendance", "earnings")
        .with_confounders("ability")
        .with_budgets(SearchBudget {
            k0: Some(5),
            ..SearchBudget::default()
        })
}

fn user_messages(gw_run: &ivscout::pipeline::DiscoveryRun) -> Vec<String> {
    gw_run
        .sessions
        .iter()
        .flat_map(|s| s.messages().iter())
        .filter(|m| m.role == Role::User)
        .map(|m| m.content.clone())
        .collect()
}

#[test]
fn college_two_step_yields_table_one() {
    let gw = live(script("college"), "college");
    let run = run_iv_two_step(&gw, &query("college"), &PipelineOptions::default()).unwrap();
    assert_eq!(run.flow, FlowKind::IvTwoStep);
    assert_eq!(run.step_sets.len(), 2);
    assert_eq!(run.step_sets[0].set.len(), 40);
    assert_eq!(run.final_set.len(), 14);
    assert_eq!(run.final_set.items[0].name, "Distance from Home to College");
    assert!(!run.has_contract_violation(), "{:?}", run.flags);
    assert!(run.integrity_problems().is_empty());
    let sent = user_messages(&run);
    assert!(sent[1].contains("choose all factors that are most likely"));
    assert!(sent[1].contains("create separate lists for school factors and factors of yourself"));
    assert_eq!(run.sessions.len(), 1);
}

#[test]
fn identical_lists_drop_and_inject_nothing() {
    let l = list(&["A", "B", "C"]);
    let gw = live(scripted(&[&l, &l]), "same");
    let run = run_iv_two_step(&gw, &iv_query(), &PipelineOptions::default()).unwrap();
    let r = &run.subset_reports[0].report;
    assert!(r.dropped.is_empty());
    assert!(r.injected.is_empty());
    assert_eq!(r.matched.len(), 3);
}

#[test]
fn demand_explanation_for_dropped_labor_costs() {
    let gw = live(script("demand"), "demand");
    let opts = PipelineOptions {
        explain_exclusions: vec!["labor costs".into()],
        ..PipelineOptions::default()
    };
    let run = run_iv_two_step(&gw, &query("demand"), &opts).unwrap();
    assert_eq!(run.final_set.len(), 12);
    assert!(run.subset_reports[0].report.dropped_keys().contains(&"labor costs"));
    assert_eq!(run.explanations.len(), 1);
    assert!(run.explanations[0].text.contains("somewhat flexible"));
    let msg = run
        .resolve(&run.explanations[0].session_id, run.explanations[0].message_index)
        .unwrap();
    assert_eq!(msg.role, Role::Assistant);
    assert!(user_messages(&run)[2].contains("explain why you didn't include \"labor costs\""));
}

#[test]
fn contrast_list_is_kept_apart() {
    let reply = "**Unassociated factors:**\n1. A: a\n2. B: b\n\n**Factors associated with ability:**\n1. C: c";
    let gw = live(scripted(&[&list(&["A", "B", "C"]), reply]), "contrast");
    let opts = PipelineOptions {
        contrast: true,
        ..PipelineOptions::default()
    };
    let run = run_iv_two_step(&gw, &iv_query(), &opts).unwrap();
    assert_eq!(run.final_set.names(), vec!["A", "B"]);
    assert_eq!(run.contrast_set.as_ref().unwrap().names(), vec!["C"]);
    assert!(user_messages(&run)[1].contains("also choose factors that are, in contrast, associated with ability."));
}

#[test]
fn probe_reply_is_stored_on_the_session() {
    let gw = live(script("college"), "probe");
    let opts = PipelineOptions {
        probe_sources: true,
        ..PipelineOptions::default()
    };
    let run = run_iv_two_step(&gw, &query("college"), &opts).unwrap();
    assert_eq!(run.probes.len(), 1);
    assert!(run.probes[0].text.starts_with("I didn't have specific sources"));
    assert_eq!(run.sessions[0].probe_replies().count(), 1);
}

#[test]
fn iv_flows_require_confounders() {
    let q = CausalQuery::new(Design::Iv, "a", "b", "c", "d");
    let gw = live(scripted(&[]), "noconf");
    match run_iv_two_step(&gw, &q, &PipelineOptions::default()) {
        Err(PipelineError::Validation(v)) => {
            assert_eq!(v[0].field, "confounders");
            assert_eq!(v[0].rule, Rule::RequiredForDesign);
        }
        other => panic!("unexpected {other:?}"),
    }
    let wrong = query("minwage_ci");
    assert!(matches!(
        run_iv_two_step(&gw, &wrong, &PipelineOptions::default()),
        Err(PipelineError::WrongDesign { .. })
    ));
}

#[test]
fn empty_first_step_aborts() {
    let gw = live(scripted(&["I cannot help with that."]), "empty");
    let err = run_iv_two_step(&gw, &iv_query(), &PipelineOptions::default()).unwrap_err();
    assert!(matches!(err, PipelineError::EmptyParse { template: TemplateId::P1, .. }), "{err}");
}

#[test]
fn empty_second_step_is_recorded_as_empty() {
    let gw = live(scripted(&[&list(&["A"]), "None of them qualify."]), "empty2");
    let run = run_iv_two_step(&gw, &iv_query(), &PipelineOptions::default()).unwrap();
    assert!(run.final_set.is_empty());
    assert_eq!(run.notes.len(), 1);
}

fn three_step_backend(step3: &'static [&'static str]) -> Arc<dyn ivscout::gateway::ChatBackend> {
    responder(move |last| {
        if last.contains("do you understand your role") {
            "yes, I understand.".into()
        } else if last.contains("what are factors that can determine your decision?") {
            list(&["A", "B", "C", "D", "E"])
        } else if last.contains("only through") {
            list(&["A", "B", "C"])
        } else {
            list(step3)
        }
    })
}

#[test]
fn three_step_shrinks_and_chains_reports() {
    let gw = live(three_step_backend(&["A", "B"]), "three");
    let run = run_iv_three_step(&gw, &iv_query(), &PipelineOptions::default()).unwrap();
    let sizes: Vec<usize> = run.step_sets.iter().map(|s| s.set.len()).collect();
    assert_eq!(sizes, vec![5, 3, 2]);
    assert_eq!(run.subset_reports.len(), 2);
    assert_eq!(run.subset_reports[1].from, "step 2");
    assert_eq!(run.sessions.len(), 1);
    let s = &run.sessions[0];
    assert_eq!(s.messages()[0].role, Role::System);
    assert_eq!(s.messages()[1].role, Role::Assistant);
    assert!(!run.has_contract_violation());
}

#[test]
fn three_step_separate_sessions_carry_the_prior_list() {
    let gw = live(three_step_backend(&["A", "B"]), "sep");
    let opts = PipelineOptions {
        separate_sessions: true,
        ..PipelineOptions::default()
    };
    let run = run_iv_three_step(&gw, &iv_query(), &opts).unwrap();
    let ids: Vec<&str> = run.sessions.iter().map(|s| s.session_id()).collect();
    assert_eq!(ids, vec!["sep-s1", "sep-s2", "sep-s3"]);
    let a2_input = &run.sessions[1].messages()[2].content;
    assert!(a2_input.starts_with(&list(&["A", "B", "C", "D", "E"])));
    assert!(a2_input.ends_with("explain the answers."));
    let a3_input = &run.sessions[2].messages()[2].content;
    assert!(a3_input.starts_with(&format!("{}\n\namong the factors listed above", list(&["A", "B", "C"]))));
    for (i, set) in run.step_sets.iter().enumerate() {
        assert_eq!(set.set.session_id, ids[i]);
    }
    assert!(run.integrity_problems().is_empty());
}

#[test]
fn three_step_injection_is_flagged() {
    let gw = live(three_step_backend(&["A", "Zebra Crossings"]), "inject");
    let run = run_iv_three_step(&gw, &iv_query(), &PipelineOptions::default()).unwrap();
    assert!(run.has_contract_violation());
    assert!(run.flags.iter().any(|f| matches!(
        f,
        RunFlag::InjectedItems { at, names } if at == "step 3" && names == &vec!["Zebra Crossings".to_string()]
    )));
}

fn joint_query() -> CausalQuery {
    iv_query().with_budgets(SearchBudget {
        k0: Some(3),
        l0: Some(2),
        ..SearchBudget::default()
    })
}

const JOINT_REPLY: &str = "**Factors:**\n1. A: a\n2. B: b\n3. C: c\n\n**Characteristics:**\n1. Age: older students earn more\n2. Gender: labor market differences";

#[test]
fn joint_flow_splits_instruments_and_characteristics() {
    let gw = live(scripted(&[JOINT_REPLY, &list(&["A"])]), "joint");
    let run = run_iv_joint_covariates(&gw, &joint_query(), &PipelineOptions::default()).unwrap();
    assert_eq!(run.step_sets[0].set.len(), 3);
    assert_eq!(run.covariate_set.as_ref().unwrap().len(), 2);
    assert!(user_messages(&run)[1].starts_with("suppose you are a student in ohio with specific Age and Gender."));
}

#[test]
fn joint_flow_curation_pauses_then_binds_selection() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("curation.txt");
    let opts = PipelineOptions {
        curation_file: Some(path.clone()),
        ..PipelineOptions::default()
    };
    let gw = live(scripted(&[JOINT_REPLY]), "cur");
    match run_iv_joint_covariates(&gw, &joint_query(), &opts) {
        Err(PipelineError::CurationPending { path: p }) => assert_eq!(p, path),
        other => panic!("unexpected {other:?}"),
    }
    let written = std::fs::read_to_string(&path).unwrap();
    assert!(written.contains("\nAge\nGender\n"));
    std::fs::write(&path, written.replace("Age\n", "")).unwrap();

    let gw = live(scripted(&[JOINT_REPLY, &list(&["A"])]), "cur");
    let run = run_iv_joint_covariates(&gw, &joint_query(), &opts).unwrap();
    let p2x = &user_messages(&run)[1];
    assert!(p2x.contains("with specific Gender."));
    assert!(!p2x.contains("Age"));
}

#[test]
fn joint_flow_without_characteristics_falls_back() {
    let gw = live(scripted(&[&list(&["A", "B", "C"]), &list(&["A"])]), "fallback");
    let run = run_iv_joint_covariates(&gw, &joint_query(), &PipelineOptions::default()).unwrap();
    assert!(run.covariate_set.as_ref().unwrap().is_empty());
    assert!(user_messages(&run)[1].contains("with specific characteristics."));
    assert!(run.notes.iter().any(|n| n.contains("falls back")));
}

#[test]
fn ci_search_examples() {
    let q = CausalQuery::new(Design::ConditionalIndependence, "a", "b", "c", "d");
    let gw = live(scripted(&[&list(&["A", "B", "C"]), &list(&["B"])]), "ci");
    let run = run_ci_search(&gw, &q, &PipelineOptions::default()).unwrap();
    assert_eq!(run.final_set.names(), vec!["B"]);
    assert!(!run.has_contract_violation());

    let gw = live(scripted(&[&list(&["A", "B", "C"]), &list(&["B", "Quasar Flux"])]), "ci2");
    let run = run_ci_search(&gw, &q, &PipelineOptions::default()).unwrap();
    assert!(run.has_contract_violation());

    let gw = live(script("minwage"), "minwage");
    let run = run_ci_search(&gw, &query("minwage_ci"), &PipelineOptions::default()).unwrap();
    assert_eq!(run.final_set.len(), 11);
    assert!(!run.has_contract_violation(), "{:?}", run.flags);
}

#[test]
fn did_search_marks_trend_only_first() {
    let gw = live(script("minwage"), "did");
    let run = run_did_search(&gw, &query("minwage_did"), &PipelineOptions::default()).unwrap();
    assert_eq!(run.final_set.len(), 11);
    let trend: Vec<bool> = run.final_set.items.iter().map(|c| c.trend_only).collect();
    assert_eq!(trend, [vec![true; 4], vec![false; 7]].concat());
    let ords: Vec<u32> = run.final_set.items.iter().map(|c| c.ordinal).collect();
    assert_eq!(ords, (1..=11).collect::<Vec<_>>());
    assert!(user_messages(&run)[1].contains(
        "directly determine your average temporal changes in average wages at fast food restaurants during the time of no minimum wage law"
    ));
    assert_eq!(run.step_sets.len(), 3);
    assert!(!run.has_contract_violation(), "{:?}", run.flags);

    let gw = live(script("minwage"), "did2");
    let opts = PipelineOptions {
        did_emphasis: false,
        ..PipelineOptions::default()
    };
    let run = run_did_search(&gw, &query("minwage_did"), &opts).unwrap();
    assert_eq!(run.final_set.len(), 7);
    assert!(run.final_set.items.iter().all(|c| !c.trend_only));
}

#[test]
fn rdd_search_reads_cutoffs() {
    let gw = live(script("medicaid"), "rdd");
    let run = run_rdd_search(&gw, &query("medicaid"), &PipelineOptions::default()).unwrap();
    let fpl = &run.final_set.items[1];
    assert_eq!(fpl.name, "Federal Poverty Level (FPL)");
    assert_eq!(fpl.cutoff.as_ref().unwrap().value_text, "below 215%");
    assert!(run.warnings.iter().any(|w| w.warning
        == ParseWarning::MissingCutoff {
            name: "Household Size".into()
        }));

    let gw = live(script("medicaid"), "rdd3");
    let opts = PipelineOptions {
        rdd_refine: true,
        ..PipelineOptions::default()
    };
    let run = run_rdd_search(&gw, &query("medicaid"), &opts).unwrap();
    assert!(user_messages(&run)[2].contains("difficult for you to manipulate"));
    assert!(user_messages(&run)[2].contains("health status just below the cutoff"));
    assert_eq!(run.final_set.names(), vec!["Federal Poverty Level (FPL)", "Age"]);
    assert_eq!(
        run.final_set.items[0].cutoff.as_ref().unwrap().value_text,
        "below 215%"
    );
}

#[test]
fn adversary_rename_and_sessions() {
    let gw = live(scripted(&[&list(&["Tuition Level", "State Laws"]), &list(&["Tuition Level", "State Laws"])]), "adv");
    let run = run_iv_two_step(&gw, &iv_query(), &PipelineOptions::default()).unwrap();
    let critic = list(&["Tuition Level", "State Laws"]);
    let defender = "1. Tuition Level: still fine";
    let adv_gw = live(scripted(&[&critic, defender]), "adv");
    let out = run_adversarial_round(&adv_gw, None, &run).unwrap();
    let m = out.adversary_material.as_ref().unwrap();
    assert_ne!(m.critic_session_id, m.defender_session_id);
    assert_eq!(m.critic_session_id, "adv-adv1-s1");
    assert_eq!(m.critiques.len(), 2);
    assert_eq!(m.critiques[1].argument, "because state laws");
    assert_eq!(out.final_set.names(), vec!["Tuition Level"]);
    assert_eq!(out.sessions[0].len(), run.sessions[0].len() + 2);
    assert!(out.integrity_problems().is_empty());
}

#[test]
fn aggregate_checks_query_and_flow() {
    let a = run_iv_two_step(
        &live(scripted(&[&list(&["A", "B"]), &list(&["A", "B"])]), "a"),
        &iv_query(),
        &PipelineOptions::default(),
    )
    .unwrap();
    let b = run_iv_two_step(
        &live(scripted(&[&list(&["B", "C"]), &list(&["B", "C"])]), "b"),
        &iv_query(),
        &PipelineOptions::default(),
    )
    .unwrap();
    let both = [a.clone(), b.clone()];
    assert_eq!(aggregate_runs(&both, AggregateMode::Intersection).unwrap().names(), vec!["B"]);
    assert_eq!(aggregate_runs(&both, AggregateMode::Union).unwrap().names(), vec!["A", "B", "C"]);

    let mut other = b;
    other.query.outcome = "wages".into();
    assert!(matches!(
        aggregate_runs(&[a.clone(), other], AggregateMode::Intersection),
        Err(PipelineError::MixedQuery { .. })
    ));
    assert!(matches!(aggregate_runs(&[], AggregateMode::Union), Err(PipelineError::NoRuns)));
}

#[test]
fn run_many_namespaces_and_bounded_parallelism() {
    let gw = live(responder(|_| list(&["A", "B"])), "base");
    let runs = run_many(&gw, &iv_query(), FlowKind::IvTwoStep, &PipelineOptions::default(), 5, 2);
    let ids: Vec<String> = runs.iter().map(|r| r.as_ref().unwrap().run_id.clone()).collect();
    assert_eq!(ids, vec!["base-r1", "base-r2", "base-r3", "base-r4", "base-r5"]);
    let mut all_sessions: Vec<String> = runs
        .iter()
        .flat_map(|r| r.as_ref().unwrap().sessions.iter().map(|s| s.session_id().to_string()))
        .collect();
    let n = all_sessions.len();
    all_sessions.dedup();
    assert_eq!(all_sessions.len(), n);
}

#[test]
fn record_then_replay_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(TranscriptStore::open(dir.path()).unwrap());
    let recorder = Gateway::record(script("college"), store.clone(), config()).with_namespace("rr");
    let opts = PipelineOptions {
        probe_sources: true,
        ..PipelineOptions::default()
    };
    let recorded = run_flow(&recorder, &query("college"), FlowKind::IvTwoStep, &opts).unwrap();
    let adv = run_adversarial_round(&recorder, None, &recorded).unwrap();

    let store = Arc::new(TranscriptStore::open_existing(dir.path()).unwrap());
    let replayer = Gateway::replay(store, config()).with_namespace("rr");
    let replayed = run_flow(&replayer, &query("college"), FlowKind::IvTwoStep, &opts).unwrap();
    assert_eq!(replayed.canonical(), recorded.canonical());
    let adv2 = run_adversarial_round(&replayer, None, &replayed).unwrap();
    assert_eq!(adv2.canonical(), adv.canonical());
}
