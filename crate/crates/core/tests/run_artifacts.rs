mod common;

use common::*;
use ivscout::artifacts::{self, ArtifactError};
use ivscout::pipeline::{run_adversarial_round, run_iv_two_step, PipelineOptions};
use ivscout::report::rows_from_markdown;

#[test]
fn saved_run_loads_back_equal() {
    let tmp = tempfile::tempdir().unwrap();
    let gw = live(script("college"), "college");
    let run = run_iv_two_step(&gw, &query("college"), &PipelineOptions::default()).unwrap();
    artifacts::save_run(tmp.path(), &run).unwrap();

    let back = artifacts::load_run(tmp.path()).unwrap();
    assert_eq!(back, run);
    assert!(tmp.path().join("query.json").is_file());
    assert!(tmp.path().join("candidates_step1.json").is_file());
    assert!(tmp.path().join("candidates_step2.json").is_file());
    assert!(tmp.path().join("subset_report.json").is_file());
    assert!(tmp.path().join("sessions/college-s1.jsonl").is_file());
    assert!(!tmp.path().join("adversary.json").exists());

    let md = std::fs::read_to_string(tmp.path().join("report.md")).unwrap();
    let rows = rows_from_markdown(&md).unwrap();
    assert_eq!(rows.len(), 14);
    assert_eq!(rows[0].name, "Distance from Home to College");
}

#[test]
fn resave_after_adversary_adds_material_and_sessions() {
    let tmp = tempfile::tempdir().unwrap();
    let gw = live(script("college"), "college");
    let run = run_iv_two_step(&gw, &query("college"), &PipelineOptions::default()).unwrap();
    artifacts::save_run(tmp.path(), &run).unwrap();
    let revised = run_adversarial_round(&gw, None, &run).unwrap();
    artifacts::save_run(tmp.path(), &revised).unwrap();
    assert!(tmp.path().join("adversary.json").is_file());
    let sessions = std::fs::read_dir(tmp.path().join("sessions")).unwrap().count();
    assert_eq!(sessions, revised.sessions.len());
}

#[test]
fn malformed_run_file_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("run.json"), "{").unwrap();
    match artifacts::load_run(tmp.path()) {
        Err(ArtifactError::Json { path, .. }) => assert!(path.ends_with("run.json")),
        other => panic!("unexpected {other:?}"),
    }
}
