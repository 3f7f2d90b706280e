//! The `affectloop` binary's subcommands.

mod common;

use std::process::{Command, Output};

use common::BIN;

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("run affectloop")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).to_string()
}

#[test]
fn kb_validate_bundled_and_broken() {
    let o = run(&["kb", "validate"]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("ok: "));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("kb.jsonl");
    std::fs::write(&bad, "{\"id\":\"a\",\"quadrant_tags\":[],\"text\":\"x\"}\n").unwrap();
    let o = run(&["kb", "validate", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("quadrant tag"));

    let sparse = dir.path().join("sparse.jsonl");
    std::fs::write(&sparse, "{\"id\":\"a\",\"quadrant_tags\":[\"HVLA\"],\"text\":\"calm\"}\n").unwrap();
    let o = run(&["kb", "validate", sparse.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("3 warnings"), "{}", stdout(&o));
}

#[test]
fn decode_manifest_reports_per_axis_table() {
    let dir = tempfile::tempdir().unwrap();
    for (name, v, a) in [("hi.csv", "0.6", "0.5"), ("lo.eeg", "-0.6", "-0.5")] {
        let out = dir.path().join(name);
        let o = run(&["synth-eeg", "--valence", v, "--arousal", a, "--duration", "12", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{o:?}");
    }
    let manifest = dir.path().join("trials.csv");
    std::fs::write(&manifest, "path,valence,arousal\nhi.csv,7.4,7.0\nlo.eeg,2.6,3.0\n").unwrap();
    let o = run(&["decode", "--manifest", manifest.to_str().unwrap()]);
    assert!(o.status.success(), "{o:?}");
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("valence_acc,arousal_acc,valence_ccc,arousal_ccc,n"));
    assert!(lines.next().unwrap().starts_with("1.0,1.0,"));
}

#[test]
fn decode_needs_a_source() {
    let o = run(&["decode"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bench_emits_table_columns() {
    let o = run(&["bench", "--plans", "2", "--sample-rate", "8000"]);
    assert!(o.status.success(), "{o:?}");
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "Method,Plan,Seed,FAD,CLAP-Sim,Emo-MSE,Dyn-Corr,Plan-Cons");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("full,0,0,,,"));
    assert!(String::from_utf8_lossy(&o.stderr).contains("mean Dyn-Corr"));
}

#[test]
fn simulate_writes_outputs_and_rejects_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = run(&["simulate", "--out", out.to_str().unwrap(), "--rounds", "2", "--target", "0.5,-0.4", "--ideal"]);
    assert!(o.status.success(), "{o:?}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["target"]["valence"], 0.5);
    assert!(out.join("report.md").exists());
    let log = std::fs::read_to_string(out.join("rounds.jsonl")).unwrap();
    assert_eq!(log.lines().count(), report["rounds"].as_array().unwrap().len());
    assert_eq!(std::fs::read_dir(out.join("clips")).unwrap().count(), log.lines().count());

    let o = run(&["simulate", "--out", out.to_str().unwrap(), "--alpha", "0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("alpha"));
}

#[test]
fn simulate_accepts_a_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"alpha":1.0,"max_rounds":3,"clip_affect":"ideal","sample_rate_hz":8000}"#).unwrap();
    let out = dir.path().join("run");
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).contains("Converged in round 1."), "{}", stdout(&o));
}
