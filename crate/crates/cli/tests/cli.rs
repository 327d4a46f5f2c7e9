//! End-to-end checks of the binary: exit codes, output shape, diagnostics.

mod common;

use common::spec_path;
use std::process::Command;

fn msgsynth(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_msgsynth"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_on(file: &str, args: &[&str]) -> std::process::Output {
    let path = spec_path(file);
    let mut full = vec![args[0], path.to_str().unwrap()];
    full.extend(&args[1..]);
    msgsynth(&full)
}

#[test]
fn validate_accepts_the_fixtures() {
    for file in [
        "cross.msg",
        "local.msg",
        "empty.msg",
        "race.msg",
        "selfloop.msg",
    ] {
        let out = run_on(file, &["validate"]);
        assert_eq!(out.status.code(), Some(0), "{file}");
        assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok:"));
    }
}

#[test]
fn classify_exit_codes_follow_the_verdict() {
    let out = run_on("cross.msg", &["classify"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("s: controllable-choice"));
    assert!(text.contains("overall: controllable-choice MSG"));

    let out = run_on("local.msg", &["classify"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("overall: local-choice MSG"));

    let out = run_on("race.msg", &["classify"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("u: uncontrollable"));
}

#[test]
fn parse_errors_exit_with_code_two() {
    let dir = tempdir();
    let bad = dir.join("bad.msg");
    std::fs::write(&bad, "bmsc b { processes p; msg a: p -> q label m; }").unwrap();
    let out = msgsynth(&["validate", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not declared"));

    let out = msgsynth(&["validate", "/nonexistent/file.msg"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_with_code_two() {
    let out = msgsynth(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run_on("cross.msg", &["triggers", "nope"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run_on("cross.msg", &["linearize", "nochart"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn triggers_prints_the_process_set() {
    let out = run_on("cross.msg", &["triggers", "s"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "{p, q}");

    let out = run_on("local.msg", &["triggers", "c"]);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "{p}");
}

#[test]
fn linearize_caps_exit_inconclusive() {
    let out = run_on("cross.msg", &["linearize", "cross", "--cap", "3"]);
    assert_eq!(out.status.code(), Some(3));

    let out = run_on("cross.msg", &["linearize", "cross"]);
    assert_eq!(out.status.code(), Some(0));
    let words: Vec<&str> = std::str::from_utf8(&out.stdout).unwrap().lines().collect();
    assert_eq!(words.len(), 4);
}

#[test]
fn synthesize_rejects_uncontrollable_graphs_naming_the_node() {
    for file in ["race.msg", "selfloop.msg"] {
        let out = run_on(file, &["synthesize"]);
        assert_eq!(out.status.code(), Some(1), "{file}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains("not controllable-choice"), "{err}");
        assert!(err.contains('u'), "offending node named: {err}");
    }
}

#[test]
fn synthesize_emits_dot_and_json() {
    let out = run_on("local.msg", &["synthesize", "--out", "dot"]);
    assert_eq!(out.status.code(), Some(0));
    let dot = String::from_utf8_lossy(&out.stdout);
    assert!(dot.starts_with("digraph cfm {"));
    // Byte-stable output.
    let again = run_on("local.msg", &["synthesize", "--out", "dot"]);
    assert_eq!(out.stdout, again.stdout);

    let out = run_on("local.msg", &["synthesize", "--out", "json"]);
    assert_eq!(out.status.code(), Some(0));
    let cfm: msgsynth_core::realize::Cfm =
        serde_json::from_slice(&out.stdout).expect("machines round-trip");
    assert_eq!(cfm.machines.len(), 2);
}

#[test]
fn explore_reports_and_exits_zero_on_deadlock_free_graphs() {
    let out = run_on(
        "cross.msg",
        &["explore", "--channel-bound", "4", "--max-configs", "10000"],
    );
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("deadlocks: 0"));
    assert!(text.contains("boundary hit: false"));

    let out = run_on("cross.msg", &["explore", "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["deadlocks"].as_array().unwrap().len(), 0);
    assert_eq!(v["complete"], serde_json::Value::Bool(true));
}

#[test]
fn explore_flags_tight_bounds_as_inconclusive() {
    let out = run_on("cross.msg", &["explore", "--max-configs", "5"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn simulate_is_seed_reproducible() {
    let a = run_on(
        "cross.msg",
        &["simulate", "--seed", "11", "--max-steps", "60"],
    );
    let b = run_on(
        "cross.msg",
        &["simulate", "--seed", "11", "--max-steps", "60"],
    );
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.status.code(), b.status.code());

    // Channel snapshots are printed on demand after steps that leave
    // messages in flight.
    let out = run_on(
        "cross.msg",
        &["simulate", "--seed", "11", "--max-steps", "3", "--show-channels"],
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stdout).contains("  ("));

    let out = run_on("empty.msg", &["simulate"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("accepting"));
}

#[test]
fn equiv_passes_on_the_controllable_fixtures() {
    for file in ["cross.msg", "local.msg", "empty.msg"] {
        let out = run_on(file, &["equiv", "--visits", "2", "--event-cap", "12"]);
        assert_eq!(out.status.code(), Some(0), "{file}");
        assert!(String::from_utf8_lossy(&out.stdout).contains("EqualAtBound"));
    }
}

#[test]
fn partition_prints_parts_and_rejects_non_runs() {
    let out = run_on("cross.msg", &["partition", "s0", "s", "s", "s", "sf"]);
    assert_eq!(out.status.code(), Some(0));
    let lines: Vec<&str> = std::str::from_utf8(&out.stdout).unwrap().lines().collect();
    assert_eq!(lines, vec!["s0 s", "s s", "sf"]);

    let out = run_on("cross.msg", &["partition", "s0", "sf"]);
    assert_eq!(out.status.code(), Some(2));
}

fn tempdir() -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("msgsynth-test-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
